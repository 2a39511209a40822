"""Collaborative generative hashing: binary user/item codes learned from
ratings and content, Hamming-space top-k recommendation, cold-start
encoding and potential-user mining through the decoder."""

from .codes import BinaryCodeMatrix, load_codes, pack_bits, save_codes, unpack_bits
from .data import (
    ContentMatrix,
    DatasetSplit,
    SparseRatings,
    load_content,
    load_ratings,
    split_dataset,
    tfidf_select,
)
from .evaluation import EvalProtocol, EvalReport, accuracy_at_k, eval_marketing, evaluate, mrr
from .index import HammingIndex, RankedList, bench, hamming_distance, real_top_k, top_k
from .marketing import PotentialUserQuery, PotentialUserResult, mine_potential_users
from .mf import LatentFactors, MfConfig, factorize, mf_objective
from .model import CGHModel, decode, encode_map, encode_probs, init_model, predict_rating
from .training import LossBreakdown, TrainConfig, TrainedModel, gradient_check, kl_bernoulli, loss, train

__version__ = "0.1.0"
