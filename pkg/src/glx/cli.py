"""Command line entry point ``glx``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import CertificateError, ConfigError, GlxError, ParameterError
from .runner import EXPERIMENTS, RunConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_CERTIFICATE, EXIT_NUMERICAL = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glx", description="Extremes of Gaussian interface models.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--workers", type=int, help="override the configured worker count")
    ap.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config, experiment=args.experiment, seed=args.seed,
                                  workers=args.workers, out=args.out)
        man = run(cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"glx: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"glx: certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except GlxError as exc:
        print(f"glx: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"config_hash": man.config_hash, "flags": man.flags,
                      "files": man.files}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
