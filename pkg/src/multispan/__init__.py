"""Tag-based multi-span answer extraction for reading comprehension."""
from .corpus import Example, GoldAnswer, Token, find_occurrences, load_dataset, tokenize, truncate_and_filter
from .decode import brute_force_decode, greedy_io_decode, predict_answer, single_span_decode, viterbi_decode
from .evaluation import em_f1, evaluate, normalize_answer
from .features import featurize
from .heads import Model, combine_heads, span_distribution, tag_distribution
from .objective import TrainConfig, marginal_log_likelihood, marginal_nll_gradient, train
from .tagging import BIO, IO, SpanSet, Tagging, TagScheme, enumerate_correct_taggings, is_valid_tagging, \
    spans_to_tagging, tagging_to_spans

__version__ = "0.1.0"
