"""The pipeline from the command line, one stage at a time.

Equivalent shell session:

    cghash demo --run planted            # or the stages below
    cghash split --run planted
    cghash mf --run planted
    cghash train --run planted --mode cold-item
    cghash encode --run planted
    cghash recommend --run planted --user 7 --k 10
    cghash mine --run planted --item 3 --k 20
    cghash eval --run planted --setting cold-item --threads 4

Run: python demos/08_command_line.py   (writes under runs/)
"""
# %%
from cghash import pipeline
from cghash.cli import main

run = pipeline.RunDir("runs/cli-demo")
cfg = pipeline.demo_config()
run.save_config(cfg)
pipeline.write_planted(run, cfg)  # stands in for `cghash ingest` on raw files

for argv in (
    ["split"],
    ["mf"],
    ["train", "--mode", "cold-item"],
    ["encode"],
    ["recommend", "--user", "7", "--k", "10"],
    ["mine", "--item", "3", "--k", "5"],
    ["eval", "--setting", "cold-item", "--threads", "4"],
):
    print("$ cghash", " ".join(argv))
    code = main([*argv, "--run", "cli-demo"])
    assert code == 0

# %%
print(open("runs/cli-demo/config").read().splitlines()[:6], "...")
