"""gen-data: synthesize a dataset file."""

import argparse

from graphtee.cli.common import add_common_arguments, out_dir, resolve_config
from graphtee.core.error_handlers import with_error_handling
from graphtee.core.exceptions import EXIT_OK
from graphtee.core.utils import output_path
from graphtee.services.dataset_io import save_dataset
from graphtee.services.datagen import build_dataset


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("gen-data", help="Generate a synthetic or TU-based dataset")
    add_common_arguments(parser)
    parser.add_argument("--tu-dir", help="Use the graphs of this TU dataset folder")
    parser.add_argument("--n-graphs", type=int, help="Number of synthetic graphs")
    parser.add_argument("--n-nodes", type=int, help="Nodes per synthetic graph")
    parser.add_argument("--alpha", type=float, help="Treatment bias strength")
    parser.set_defaults(handler=gen_data)


@with_error_handling
def gen_data(args: argparse.Namespace) -> int:
    overrides = {
        "dataset.n_graphs": args.n_graphs,
        "dataset.n_nodes": args.n_nodes,
        "dataset.alpha": args.alpha,
    }
    if args.tu_dir:
        overrides.update({"dataset.source": "tu", "dataset.tu_dir": args.tu_dir})
    config = resolve_config(args, overrides)
    samples, manifest = build_dataset(config.dataset, config.seed)
    path = save_dataset(samples, manifest, output_path(out_dir(args), "gen-data", config.digest(), "jsonl"))
    print(path)
    return EXIT_OK
