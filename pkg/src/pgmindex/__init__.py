"""PGM-index family: optimal piecewise-linear indexes over sorted integer keys."""
from .errors import *  # noqa: F401,F403
from .pla import (KeyPoint, OptimalPLA, PlaModel, Segment, build_greedy_pla, build_optimal_pla,
                  build_optimal_pla_ranged, build_pla_arrays, segment_predict, verify_epsilon)
from .index import PgmIndex, SortedKeys, build_index, deserialize_index, load_index, serialize_index
from .compression import (CompressedPgm, SlopeTable, build_compressed, compressed_rank, load_compressed,
                          minimize_slopes)
from .elias_fano import InterceptStore, access, encode_intercepts
from .dist_aware import (DistAwarePgm, NodeWeight, WeightedKey, build_dist_aware, dist_rank,
                         expected_cost_report)
from .tuner import CostModel, PowerLawFit, TuneResult, fit_powerlaw, min_space_tune, min_time_tune
from .datasets import DatasetSpec, gen_dataset, load_dataset, save_dataset
from .bench import BenchRecord, report_savings, run_bench

__version__ = "0.1.0"
