"""Scenario files: contract setup, feeds, assertions and a timestamped timeline.

Scenarios are YAML documents. Every mapping keeps the source line of each
key so configuration errors can point at the offending field. See the
README for the schema; ``SCHEMA_VERSION`` is the only accepted version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Callable

import yaml

from .clamm import Pool
from .core import CoreContract
from .drt import DRT, Tranche, YieldVault
from .errors import BakupError, ConfigError
from .fixed import fx, mul
from .market import Market
from .oracle import Assertion, OracleEngine, PriceFeed, depeg_assertions

SCHEMA_VERSION = 1


class _Map(dict):
    """dict that remembers the 1-based source line of itself and each key."""

    line: int | None = None
    key_lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader: _Loader, node: yaml.MappingNode) -> _Map:
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key '{key}'", line=key_node.start_mark.line + 1, field=str(key))
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)


class ScenarioError(BakupError):
    """A timeline step failed; carries the step index and op name."""

    def __init__(self, step: int, op: str, cause: Exception):
        self.step, self.op, self.cause = step, op, cause
        super().__init__(f"step {step} ({op}): {type(cause).__name__}: {cause}")


def _line(m: Any, key: str | None = None) -> int | None:
    if isinstance(m, _Map):
        if key is not None and key in m.key_lines:
            return m.key_lines[key]
        return m.line
    return None


def _req(m: _Map, key: str, where: str) -> Any:
    if not isinstance(m, dict):
        raise ConfigError(f"{where} must be a mapping", line=_line(m), field=where)
    if key not in m:
        raise ConfigError(f"{where}: missing required field", line=_line(m), field=key)
    return m[key]


def _dec(m: _Map, key: str, default: Any = None) -> Decimal:
    raw = m.get(key, default)
    if raw is None:
        raise ConfigError("missing required number", line=_line(m), field=key)
    if isinstance(raw, bool):
        raise ConfigError(f"expected a number, got {raw!r}", line=_line(m, key), field=key)
    try:
        # YAML floats pass through repr, so 0.1 stays 0.1
        return fx(raw)
    except (InvalidOperation, TypeError, ValueError):
        raise ConfigError(f"expected a number, got {raw!r}", line=_line(m, key), field=key) from None


def _int(m: _Map, key: str, default: Any = None) -> int:
    raw = m.get(key, default)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"expected an integer, got {raw!r}", line=_line(m, key), field=key)
    return raw


# ---------------------------------------------------------------------------


@dataclass
class Step:
    index: int
    t: int
    op: str
    args: _Map
    line: int | None


@dataclass
class Scenario:
    contract: CoreContract
    oracle: OracleEngine
    markets: dict[int, Market] = field(default_factory=dict)
    vault: YieldVault | None = None
    vault_drt: DRT | None = None
    timeline: list[Step] = field(default_factory=list)
    source: str = "<string>"


def load(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text, base_dir=path.parent, source=str(path))


def loads(text: str, base_dir: str | Path = ".", source: str = "<string>") -> Scenario:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line=line) from None
    if not isinstance(doc, _Map):
        raise ConfigError("scenario must be a mapping at top level", line=1)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                          line=_line(doc, "schema_version"), field="schema_version")
    known = {"schema_version", "contract", "feeds", "assertions", "pools", "vault", "timeline", "name"}
    for key in doc:
        if key not in known:
            raise ConfigError("unknown top-level field", line=_line(doc, key), field=str(key))

    oracle = OracleEngine()
    for spec in doc.get("feeds") or []:
        oracle.add_feed(_load_feed(spec, Path(base_dir)))
    for spec in doc.get("assertions") or []:
        for a in _load_assertion(spec):
            oracle.add_assertion(a)
    if "assertions" in doc:
        _check_refs(oracle, doc["assertions"])

    c = _req(doc, "contract", "contract")
    events = _req(c, "events", "contract")
    if not isinstance(events, list) or not events:
        raise ConfigError("contract.events must be a non-empty list of assertion ids",
                          line=_line(c, "events"), field="events")
    for a_id in events:
        if a_id not in oracle.assertions:
            raise ConfigError(f"event references unknown assertion '{a_id}'", line=_line(c, "events"), field="events")
    try:
        contract = CoreContract(
            [str(a) for a in events],
            expiration=_int(c, "expiration"),
            fee=_dec(c, "fee", 0),
            epsilon=_dec(c, "epsilon", "0.01"),
            fee_to=str(c.get("fee_to", "feeTo")),
            oracle=oracle,
            trigger_reward=_dec(c, "trigger_reward", 0),
            debug=bool(c.get("debug", True)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), line=_line(c), field="contract") from None

    sc = Scenario(contract, oracle, source=source)
    for spec in doc.get("pools") or []:
        ev = _int(spec, "event", 1)
        if not 1 <= ev <= contract.n:
            raise ConfigError(f"pool references unknown event {ev}", line=_line(spec, "event"), field="event")
        pool = Pool(_dec(spec, "price"), fee_rate=_dec(spec, "fee_rate", 0))
        sc.markets[ev] = Market(contract, pool, ev, slippage=_dec(spec, "slippage", "0.005"))

    if doc.get("vault") is not None:
        v = doc["vault"]
        try:
            tranche = Tranche(str(v.get("tranche", "A")))
        except ValueError:
            raise ConfigError("tranche must be A or B", line=_line(v, "tranche"), field="tranche") from None
        sc.vault = YieldVault(contract, event=_int(v, "event", 1), tranche=tranche)
        sc.vault_drt = DRT()

    last_t = None
    for i, st in enumerate(doc.get("timeline") or []):
        if not isinstance(st, _Map):
            raise ConfigError("timeline entries must be mappings", field=f"timeline[{i}]")
        t = _int(st, "t")
        op = str(_req(st, "op", f"timeline[{i}]"))
        if op not in OPS:
            raise ConfigError(f"unknown op '{op}'", line=_line(st, "op"), field="op")
        if last_t is not None and t < last_t:
            raise ConfigError(f"timestamps must be non-decreasing ({t} after {last_t})", line=_line(st, "t"), field="t")
        last_t = t
        sc.timeline.append(Step(i, t, op, st, _line(st)))
    return sc


def _load_feed(spec: _Map, base: Path) -> PriceFeed:
    fid = str(_req(spec, "id", "feed"))
    integer = bool(spec.get("integer_ticks", False))
    if "csv" in spec:
        p = Path(str(spec["csv"]))
        p = p if p.is_absolute() else base / p
        if not p.exists():
            raise ConfigError(f"feed file not found: {p}", line=_line(spec, "csv"), field="csv")
        return PriceFeed.from_csv(fid, p, integer)
    samples = _req(spec, "samples", f"feed {fid}")
    try:
        return PriceFeed.from_samples(fid, [(int(ts), Decimal(str(px))) for ts, px in samples], integer)
    except (ValueError, TypeError, InvalidOperation) as exc:
        raise ConfigError(f"feed {fid}: {exc}", line=_line(spec, "samples"), field="samples") from None


def _load_assertion(spec: _Map) -> list[Assertion]:
    aid = str(_req(spec, "id", "assertion"))
    kind = str(_req(spec, "kind", f"assertion {aid}"))
    tick = spec.get("tick_threshold")
    if kind == "depeg":
        return depeg_assertions(
            str(_req(spec, "pool_feed", aid)), str(_req(spec, "external_feed", aid)),
            threshold=str(spec.get("threshold", "0.95")), window=_int(spec, "window", 3600),
            prefix=aid, tick_threshold=None if tick is None else float(tick),
        )
    if kind in ("threshold_below", "threshold_above"):
        return [Assertion(aid, kind, threshold=_dec(spec, "threshold"), window=_int(spec, "window", 0),
                          feed=str(_req(spec, "feed", aid)), tick_threshold=None if tick is None else float(tick))]
    if kind in ("composite_and", "composite_or"):
        children = _req(spec, "children", aid)
        return [Assertion(aid, kind, children=tuple(str(c) for c in children))]
    if kind == "constant":
        return [Assertion(aid, kind, value=bool(spec.get("value", False)))]
    raise ConfigError(f"unknown assertion kind '{kind}'", line=_line(spec, "kind"), field="kind")


def _check_refs(oracle: OracleEngine, specs: list) -> None:
    for spec in specs:
        for key in ("feed", "pool_feed", "external_feed"):
            if key in spec and str(spec[key]) not in oracle.feeds:
                raise ConfigError(f"unknown feed id '{spec[key]}'", line=_line(spec, key), field=key)
        for c in spec.get("children") or []:
            if str(c) not in oracle.assertions:
                raise ConfigError(f"unknown assertion id '{c}'", line=_line(spec, "children"), field="children")


# ---------------------------------------------------------------------------
# replay


def _s(v: Any) -> Any:
    if isinstance(v, Decimal):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _s(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_s(x) for x in v]
    return v


def _market(sc: Scenario, a: _Map) -> Market:
    ev = _int(a, "event", 1)
    if ev not in sc.markets:
        raise ConfigError(f"no pool configured for event {ev}", line=_line(a, "event"), field="event")
    return sc.markets[ev]


def _vault(sc: Scenario, a: _Map) -> YieldVault:
    if sc.vault is None:
        raise ConfigError("vault op without a vault section", line=_line(a, "op"), field="op")
    return sc.vault


def _op_fund(sc, st, a):
    sc.contract.fund(str(_req(a, "account", "fund")), _dec(a, "amount"))
    return {}


def _op_transfer(sc, st, a):
    sc.contract.transfer(str(a["from"]), str(a["to"]), str(a["token"]), _dec(a, "amount"))
    return {}


def _op_mint(sc, st, a):
    return {"minted": sc.contract.mint(_int(a, "event", 1), _dec(a, "amount"), str(a["account"]))}


def _op_burn(sc, st, a):
    return {"returned": sc.contract.burn(_int(a, "event", 1), _dec(a, "amount"), str(a["account"]))}


def _op_redeem_p(sc, st, a):
    return {"payout": sc.contract.redeem_p(_int(a, "event", 1), _dec(a, "amount"), str(a["account"]), st.t)}


def _op_redeem_u(sc, st, a):
    return {"payout": sc.contract.redeem_u(_int(a, "event", 1), _dec(a, "amount"), str(a["account"]), st.t)}


def _op_trigger(sc, st, a):
    return {"fired": sc.contract.trigger(_int(a, "event", 1), str(a.get("account", "keeper")), st.t)}


def _op_add_liquidity(sc, st, a):
    m = _market(sc, a)
    pos = m.add_liquidity(str(a["account"]), _dec(a, "lower"), _dec(a, "upper"),
                          _dec(a, "amount_p", 0), _dec(a, "amount_u", 0))
    return {"position": pos.id, "liquidity": pos.liquidity}


def _op_remove_liquidity(sc, st, a):
    x, y, fx_, fy = _market(sc, a).remove_liquidity(str(a["account"]), _int(a, "position"))
    return {"amount_p": x, "amount_u": y, "fees_p": fx_, "fees_u": fy}


def _trade(name: str) -> Callable:
    def run(sc, st, a):
        q = getattr(_market(sc, a), name)(_dec(a, "amount"), str(a["account"]))
        return {"price": q.realized_price, "ideal_price": q.ideal_price, "paid_or_received": q.cost_or_proceeds,
                "tokens": q.received}
    return run


def _op_vault_deposit(sc, st, a):
    _vault(sc, a).deposit(str(a["account"]), _dec(a, "amount"), str(a["token"]))
    return {"lambda": sc.vault.lam}


def _op_vault_invest(sc, st, a):
    return {"invested": _vault(sc, a).invest(sc.vault_drt)}


def _op_vault_divest(sc, st, a):
    v = _vault(sc, a)
    if "recovered" in a:
        recovered = _dec(a, "recovered")
    else:
        # recovery ratio k'/k of the DRT, split by the waterfall
        sc.vault_drt.invest()
        sc.vault_drt.divest(mul(sc.vault_drt.capital, _dec(a, "recovery")),
                            mul(sc.vault_drt.capital, _dec(a, "interest", 0)))
        recovered = mul(v.invested, sc.vault_drt.recovery_rate(v.tranche))
    v.divest_and_distribute(recovered)
    return {"recovered": recovered, "minted": v.minted, "yield_p": v.yield_fraction("P"),
            "yield_u": v.yield_fraction("U")}


def _op_check(sc, st, a):
    sc.contract.check_invariants(st.t)
    return {}


OPS: dict[str, Callable] = {
    "fund": _op_fund,
    "transfer": _op_transfer,
    "mint": _op_mint,
    "burn": _op_burn,
    "redeem_p": _op_redeem_p,
    "redeem_u": _op_redeem_u,
    "trigger": _op_trigger,
    "add_liquidity": _op_add_liquidity,
    "remove_liquidity": _op_remove_liquidity,
    "buy_policy": _trade("buy_policy"),
    "buy_underwriting": _trade("buy_underwriting"),
    "sell_policy": _trade("sell_policy"),
    "sell_underwriting": _trade("sell_underwriting"),
    "vault_deposit": _op_vault_deposit,
    "vault_invest": _op_vault_invest,
    "vault_divest": _op_vault_divest,
    "check": _op_check,
}


@dataclass
class RunResult:
    log: list[dict]
    initial: dict
    final: dict


def state_report(sc: Scenario) -> dict:
    rep = {"contract": sc.contract.snapshot()}
    rep["pools"] = {
        str(ev): {
            "price": str(fx(m.pool.price)),
            "balance_p": str(m.pool.balance_x),
            "balance_u": str(m.pool.balance_y),
            "fees_p": str(m.pool.fees_x),
            "fees_u": str(m.pool.fees_y),
            "positions": len(m.pool.positions),
        }
        for ev, m in sorted(sc.markets.items())
    }
    if sc.vault is not None:
        v = sc.vault
        rep["vault"] = {"phase": v.phase.value, "tranche": v.tranche.value, "k_p": str(v.k_p),
                        "k_u": str(v.k_u), "invested": str(v.invested), "minted": str(v.minted)}
    return rep


def run(sc: Scenario) -> RunResult:
    """Replay the timeline in order. A failing step raises ScenarioError."""
    initial = state_report(sc)
    log = []
    for st in sc.timeline:
        try:
            out = OPS[st.op](sc, st, st.args)
        except ConfigError:
            raise
        except KeyError as exc:
            raise ConfigError(f"step {st.index} ({st.op}): missing field", line=st.line, field=str(exc.args[0])) from None
        except (BakupError, ArithmeticError, ValueError, RuntimeError) as exc:
            raise ScenarioError(st.index, st.op, exc) from exc
        log.append({"step": st.index, "t": st.t, "op": st.op, **_s(out)})
    return RunResult(log, initial, state_report(sc))


def write_outputs(result: RunResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.jsonl", "w", newline="\n") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    report = {"initial": result.initial, "final": result.final}
    (out / "final_state.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
