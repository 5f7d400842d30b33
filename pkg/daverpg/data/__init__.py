from .libsvm import LibSVMDataset, dump_libsvm, load_libsvm, parse_libsvm, partition
from .synth import problem_digest, problem_from_dataset, synth_problem

__all__ = [
    "LibSVMDataset",
    "dump_libsvm",
    "load_libsvm",
    "parse_libsvm",
    "partition",
    "problem_digest",
    "problem_from_dataset",
    "synth_problem",
]
