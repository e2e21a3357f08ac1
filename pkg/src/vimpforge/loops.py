"""Natural loops and the expansion of loop invariants into checks.

The control-flow graph here is instruction-level: node ``i`` is line ``i`` of
the (exception-lowered) body.  Working per instruction keeps edge splitting
simple and makes loop bodies directly comparable with interpreter program
counters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .ir import (
    AssertStmt, AssumeStmt, Diagnostic, Expr, Goto, IfGoto, InvariantStmt,
    Line, MethodDecl, Program, VimpError, conjoin, falls_through,
)


@dataclass
class CFG:
    n: int
    succ: list[list[int]]
    pred: list[list[int]]

    @classmethod
    def of(cls, method: MethodDecl) -> CFG:
        body = method.body or ()
        labels = method.label_index()
        n = len(body)
        succ: list[list[int]] = [[] for _ in range(n)]
        for i, ln in enumerate(body):
            ins = ln.instr
            if isinstance(ins, (IfGoto, Goto)):
                succ[i].append(labels[ins.target])
            if falls_through(ins) and i + 1 < n and (i + 1) not in succ[i]:
                succ[i].append(i + 1)
        pred: list[list[int]] = [[] for _ in range(n)]
        for u, vs in enumerate(succ):
            for v in vs:
                pred[v].append(u)
        return cls(n, succ, pred)

    def reachable(self, root: int = 0) -> list[int]:
        """Reverse postorder of nodes reachable from ``root``."""
        if self.n == 0:
            return []
        seen, order = {root}, []
        stack = [(root, iter(self.succ[root]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                order.append(node)
            elif nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(self.succ[nxt])))
        return order[::-1]


def dominators(cfg: CFG, root: int = 0) -> dict[int, set[int]]:
    """Dominator sets of every reachable node (iterative data-flow)."""
    rpo = cfg.reachable(root)
    nodes = set(rpo)
    dom = {v: set(nodes) for v in rpo}
    dom[root] = {root}
    changed = True
    while changed:
        changed = False
        for v in rpo:
            if v == root:
                continue
            preds = [p for p in cfg.pred[v] if p in nodes]
            new = set.intersection(*(dom[p] for p in preds)) if preds else set()
            new = new | {v}
            if new != dom[v]:
                dom[v] = new
                changed = True
    return dom


@dataclass
class LoopInfo:
    header: int
    body: frozenset[int]
    back_edges: list[tuple[int, int]]
    exit_edges: list[tuple[int, int]]
    invariant_lines: list[int] = field(default_factory=list)
    invariant: Optional[Expr] = None
    header_label: Optional[str] = None


def _natural_body(cfg: CFG, header: int, sources: list[int]) -> frozenset[int]:
    body = {header}
    work = [s for s in sources if s != header]
    body.update(work)
    while work:
        v = work.pop()
        for p in cfg.pred[v]:
            if p not in body:
                body.add(p)
                work.append(p)
    return frozenset(body)


def _sccs(nodes: list[int], succ) -> list[list[int]]:
    """Tarjan's algorithm restricted to ``nodes``."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on, stack, out = set(), [], []
    counter = [0]
    allowed = set(nodes)

    def visit(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        for w in succ(v):
            if w not in allowed:
                continue
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(comp)

    for v in nodes:
        if v not in index:
            visit(v)
    return out


def detect_loops(method: MethodDecl) -> list[LoopInfo]:
    """Natural loops of ``method``, outermost first.

    Back edges sharing a header form one loop.  Each invariant statement is
    assigned to the innermost loop containing it.  A cycle that is not a
    natural loop is tolerated unless it holds an invariant.
    """
    body = method.body or ()
    cfg = CFG.of(method)
    dom = dominators(cfg)
    back: dict[int, list[int]] = {}
    for u in dom:
        for v in cfg.succ[u]:
            if v in dom[u]:
                back.setdefault(v, []).append(u)

    # with dominance back edges removed a reducible graph is acyclic
    back_set = {(u, h) for h, us in back.items() for u in us}
    for comp in _sccs(sorted(dom), lambda v: [w for w in cfg.succ[v] if (v, w) not in back_set]):
        cyclic = len(comp) > 1 or any(w == comp[0] for w in cfg.succ[comp[0]]
                                      if (comp[0], w) not in back_set)
        if cyclic and any(isinstance(body[i].instr, InvariantStmt) for i in comp):
            raise VimpError([Diagnostic("L1", f"invariant in an irreducible loop of "
                                        f"{method.qname}", body[min(comp)].pos)])

    loops = []
    for h in sorted(back):
        lb = _natural_body(cfg, h, back[h])
        exits = [(u, v) for u in sorted(lb) for v in cfg.succ[u] if v not in lb]
        labels = body[h].labels
        loops.append(LoopInfo(h, lb, [(u, h) for u in sorted(back[h])], exits,
                              header_label=labels[0] if labels else None))
    loops.sort(key=lambda lp: (-len(lp.body), lp.header))

    for i, ln in enumerate(body):
        if not isinstance(ln.instr, InvariantStmt) or i not in dom:
            continue
        owners = [lp for lp in loops if i in lp.body]
        if not owners:
            raise VimpError([Diagnostic("L1", "invariant outside any loop", ln.pos)])
        min(owners, key=lambda lp: len(lp.body)).invariant_lines.append(i)
    for lp in loops:
        if lp.invariant_lines:
            lp.invariant = conjoin([body[i].instr.expr for i in lp.invariant_lines])
    return loops


def _owned_target(lp: LoopInfo, v: int, cfg: CFG) -> bool:
    # method entry counts as an outside predecessor of line 0
    return v != 0 and all(p in lp.body for p in cfg.pred[v])


class _Labels:
    def __init__(self, method: MethodDecl):
        self.taken = set(method.label_index())
        self.counter = 0

    def fresh(self, prefix: str = "exit") -> str:
        while True:
            self.counter += 1
            name = f"{prefix}${self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def expand_invariants(method: MethodDecl, loops: Optional[list[LoopInfo]] = None) -> MethodDecl:
    """Replace invariant statements by asserts and assumes.

    For a loop with invariant ``I``: ``assert I`` at the header (entry and
    every back edge pass through it), ``assume I`` where each invariant
    statement stood, and ``assert I`` on every exit edge.  An exit edge gets
    its assert at the target when every predecessor of the target lies in the
    loop, otherwise on a split edge.  Where several loops share a check
    point, inner loops are checked first.
    """
    if method.body is None:
        return method
    if loops is None:
        loops = detect_loops(method)
    active = [lp for lp in loops if lp.invariant is not None]
    if not active:
        return method
    body = list(method.body)
    cfg = CFG.of(method)
    fresh = _Labels(method)
    inner_first = sorted(active, key=lambda lp: (len(lp.body), lp.header))

    before: dict[int, list[Expr]] = {}      # asserts that take over line labels
    after: dict[int, list[Expr]] = {}       # asserts on a fallthrough edge
    jump_split: dict[tuple[int, int], list[Expr]] = {}

    for lp in inner_first:
        for u, v in lp.exit_edges:
            if _owned_target(lp, v, cfg):
                continue
            ins = body[u].instr
            if isinstance(ins, (IfGoto, Goto)) and method.label_index()[ins.target] == v:
                jump_split.setdefault((u, v), []).append(lp.invariant)
            if falls_through(ins) and v == u + 1:
                after.setdefault(u, []).append(lp.invariant)
        targets = {v for u, v in lp.exit_edges if _owned_target(lp, v, cfg)}
        for v in sorted(targets):
            before.setdefault(v, []).append(lp.invariant)
    # header asserts come after any exit asserts landing on the same line
    for lp in sorted(active, key=lambda lp: (-len(lp.body), lp.header)):
        before.setdefault(lp.header, []).append(lp.invariant)

    assume_at = {i: lp.invariant for lp in active for i in lp.invariant_lines}

    out: list[Line] = []
    tails: list[Line] = []
    for i, ln in enumerate(body):
        labels = ln.labels
        for inv in before.get(i, ()):
            out.append(Line(labels, AssertStmt(inv), ln.pos))
            labels = ()
        ins = ln.instr
        if i in assume_at:
            ins = AssumeStmt(assume_at[i])
        splits = [(v, invs) for (u, v), invs in jump_split.items() if u == i]
        for v, invs in splits:
            lbl = fresh.fresh()
            target = ins.target
            tails.extend(Line((lbl,) if k == 0 else (), AssertStmt(inv), ln.pos)
                         for k, inv in enumerate(invs))
            tails.append(Line((), Goto(target), ln.pos))
            ins = replace(ins, target=lbl)
        out.append(Line(labels, ins, ln.pos))
        for inv in after.get(i, ()):
            out.append(Line((), AssertStmt(inv), ln.pos))
    return replace(method, body=tuple(out + tails))


def expand_method(method: MethodDecl) -> MethodDecl:
    if method.body is None or method.is_predicate:
        return method
    return expand_invariants(method, detect_loops(method))


def transform_program(program: Program) -> Program:
    return program.with_methods(expand_method(m) for m in program.methods)
