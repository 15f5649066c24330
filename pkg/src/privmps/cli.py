"""Command-line entry points: oracle, sim, party, verify, gen, init-config."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .field import DEFAULT_PARAMS, FieldParams
from .lattice import MODES, brute_force_mps, maximal_parent_sets
from .scoring import DataTable, FloatBackend, QuantizedBackend, Schema, SchemaError
from .session import (DEALER, ConfigError, SessionConfig, SessionError, run_csp, run_data_owner, run_dealer,
                      run_inprocess, tcp_endpoint)
from .synth import generate, split
from .transcript import transcript_audit
from .transport import ProtocolAbort

log = logging.getLogger("privmps")


def load_csv(path, schema: Schema) -> DataTable:
    """Read a header + rows CSV; cells are state labels or integer codes."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        if tuple(header) != schema.names:
            raise SchemaError(f"{path}: header {header} does not match schema {list(schema.names)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != schema.n:
                raise SchemaError(f"{path}:{lineno}: expected {schema.n} cells, got {len(row)}")
            try:
                rows.append(tuple(var.code(cell.strip()) for var, cell in zip(schema.variables, row)))
            except SchemaError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return DataTable(tuple(rows))


def write_csv(path, table: DataTable, schema: Schema, labels: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(schema.names)
        for row in table.rows:
            if labels:
                w.writerow([v.states[x] if v.states else x for v, x in zip(schema.variables, row)])
            else:
                w.writerow(row)


def _emit(report: dict, out) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _load_inputs(args) -> tuple[Schema, list[DataTable]]:
    schema = Schema.load(args.schema)
    if args.m_max is not None:
        schema = Schema(schema.variables, args.m_max)
    return schema, [load_csv(p, schema) for p in args.data]


def run_oracle(schema: Schema, tables: list[DataTable], target: str, l_max=None, mode="corrected",
               precision="fixed", empty_set_penalty=False, params: FieldParams = DEFAULT_PARAMS) -> dict:
    table = DataTable.concat(tables)
    t = schema.index(target)
    t0 = time.perf_counter()
    if precision == "fixed":
        backend = QuantizedBackend(schema, table, t, params.f, params.K)
    else:
        backend = FloatBackend(schema, table, t)
    trace: list = []
    pg = maximal_parent_sets(backend, l_max, mode, empty_set_penalty, trace)
    return {"pg": pg.to_dict(schema.names), "precision": precision, "scored_candidates": len(trace),
            "timings": {"traversal": time.perf_counter() - t0}}


def run_sim(schema: Schema, tables: list[DataTable], target: str, l_max=None, mode="corrected", csps=3,
            seed=None, empty_set_penalty=False, params: FieldParams = DEFAULT_PARAMS) -> dict:
    config = SessionConfig(schema, target, len(tables), csps, l_max, mode, empty_set_penalty, params, seed)
    res = run_inprocess(config, tables)
    audit = transcript_audit(res.transcript, res.pg, p=params.p)
    return {"pg": res.pg.to_dict(schema.names), "timings": res.timings,
            "transcript": res.transcript.summary(), "audit": audit.to_dict(),
            "material": res.csp[0].material, "scored_candidates": len(res.csp[0].trace)}


def verify(schema: Schema, table: DataTable, target: str, l_max=None, empty_set_penalty=False,
           corrupt: tuple | None = None) -> tuple[bool, list[str]]:
    """Lattice engine (corrected, quantized) against exhaustive enumeration.

    ``corrupt`` names a candidate set whose lattice-side score is bumped, to
    check that the harness reports divergence.
    """
    t = schema.index(target)
    backend = QuantizedBackend(schema, table, t)
    if corrupt is not None:
        backend = _CorruptedBackend(schema, table, t, bad=tuple(sorted(corrupt)))
    engine = maximal_parent_sets(backend, l_max, "corrected", empty_set_penalty)
    oracle = brute_force_mps(QuantizedBackend(schema, table, t), l_max, empty_set_penalty)
    diff = []
    for k in range(max(len(engine), len(oracle))):
        a = engine.records[k] if k < len(engine) else None
        b = oracle.records[k] if k < len(oracle) else None
        if a != b:
            diff.append(f"record {k}: lattice {a} vs brute force {b}")
    return not diff, diff


class _CorruptedBackend(QuantizedBackend):
    def __init__(self, *args, bad=(), **kwargs):
        super().__init__(*args, **kwargs)
        self.bad = bad

    def entropy2(self, parents):
        h = super().entropy2(parents)
        return h - (1 << 20) if tuple(parents) == self.bad else h


def run_party(config: SessionConfig, role: str, index: int = 0, data=None) -> dict:
    if role == "dealer":
        rep = run_dealer(config, tcp_endpoint(config, DEALER))
        return {"role": role, "issued": rep.issued, "requests": rep.requests, "inbound": rep.inbound_types}
    if role == "csp":
        out = run_csp(config, index, tcp_endpoint(config, config.csp_ids[index]))
        audit = transcript_audit(out.transcript, out.pg, p=config.params.p)
        return {"role": role, "index": index, "pg": out.pg.to_dict(config.schema.names),
                "transcript": out.transcript.summary(), "audit": audit.to_dict(), "timings": out.timings}
    if role == "do":
        if data is None:
            raise ConfigError("a data owner needs --data")
        table = load_csv(data, config.schema)
        pg = run_data_owner(config, index, table, tcp_endpoint(config, config.do_ids[index]))
        return {"role": role, "index": index, "pg": pg.to_dict(config.schema.names)}
    raise ConfigError(f"unknown role {role!r}")


def make_config(schema: Schema, target: str, owners: int, csps: int, host="127.0.0.1", base_port=47000,
                **kwargs) -> SessionConfig:
    probe = SessionConfig(schema, target, owners, csps, **kwargs)
    addresses = {pid: (host, base_port + k) for k, pid in enumerate(probe.roster)}
    return SessionConfig(schema, target, owners, csps, addresses=addresses, session_id=probe.session_id, **kwargs)


def _params(args) -> FieldParams:
    return FieldParams(f=args.f, K=args.K)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="privmps", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, data=True):
        p.add_argument("--schema", required=True)
        if data:
            p.add_argument("--data", action="append", required=True, help="CSV file, one per data owner")
        p.add_argument("--target", required=True)
        p.add_argument("--lmax", type=int, default=None)
        p.add_argument("--m-max", type=int, default=None, help="override the schema's m_max")
        p.add_argument("--empty-set-penalty", action="store_true")
        p.add_argument("--f", type=int, default=16, help="fixed-point fraction bits")
        p.add_argument("--K", type=int, default=40, help="comparison magnitude bits")
        p.add_argument("--out")

    p = sub.add_parser("oracle", help="plaintext traversal (float or fixed-point)")
    common(p)
    p.add_argument("--mode", choices=MODES, default="corrected")
    p.add_argument("--precision", choices=("fixed", "float"), default="fixed")

    p = sub.add_parser("sim", help="all parties in one process")
    common(p)
    p.add_argument("--mode", choices=MODES, default="corrected")
    p.add_argument("--csps", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("verify", help="lattice engine vs brute force")
    common(p)

    p = sub.add_parser("party", help="run one party over TCP")
    p.add_argument("--config", required=True)
    p.add_argument("--role", required=True, choices=("do", "csp", "dealer"))
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--data")
    p.add_argument("--out")

    p = sub.add_parser("gen", help="synthetic data split across owners")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--arities", default="2", help="one value or a comma-separated list")
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--copy", action="store_true", help="last variable copies the first")
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("init-config", help="write a TCP session config for loopback or a LAN")
    p.add_argument("--schema", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--owners", type=int, required=True)
    p.add_argument("--csps", type=int, default=3)
    p.add_argument("--lmax", type=int, default=None)
    p.add_argument("--mode", choices=MODES, default="corrected")
    p.add_argument("--empty-set-penalty", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--base-port", type=int, default=47000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.cmd == "oracle":
            schema, tables = _load_inputs(args)
            _emit(run_oracle(schema, tables, args.target, args.lmax, args.mode, args.precision,
                             args.empty_set_penalty, _params(args)), args.out)
        elif args.cmd == "sim":
            schema, tables = _load_inputs(args)
            report = run_sim(schema, tables, args.target, args.lmax, args.mode, args.csps, args.seed,
                             args.empty_set_penalty, _params(args))
            _emit(report, args.out)
            return 0 if report["audit"]["passed"] else 1
        elif args.cmd == "verify":
            schema, tables = _load_inputs(args)
            ok, diff = verify(schema, DataTable.concat(tables), args.target, args.lmax, args.empty_set_penalty)
            print("PASS" if ok else "FAIL")
            for line in diff:
                print(line)
            return 0 if ok else 1
        elif args.cmd == "party":
            config = SessionConfig.load(args.config)
            _emit(run_party(config, args.role, args.index, args.data), args.out)
        elif args.cmd == "gen":
            arities = [int(a) for a in args.arities.split(",")]
            arities = arities * args.n if len(arities) == 1 else arities
            schema, table = generate(args.n, args.m, arities, args.seed, args.noise, copy_last=args.copy,
                                     m_max=args.m_max)
            outdir = Path(args.outdir)
            outdir.mkdir(parents=True, exist_ok=True)
            schema.dump(outdir / "schema.json")
            for k, shard in enumerate(split(table, args.shards, args.seed)):
                write_csv(outdir / f"owner{k}.csv", shard, schema)
            print(f"wrote schema.json and {args.shards} shard(s) to {outdir}")
        elif args.cmd == "init-config":
            schema = Schema.load(args.schema)
            cfg = make_config(schema, args.target, args.owners, args.csps, args.host, args.base_port,
                              l_max=args.lmax, mode=args.mode, empty_set_penalty=args.empty_set_penalty,
                              seed=args.seed)
            cfg.dump(args.out)
            print(f"wrote {args.out} for roster {cfg.roster}")
    except (SessionError, ProtocolAbort, ConfigError, SchemaError, OSError, ValueError) as exc:
        print(f"privmps: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
