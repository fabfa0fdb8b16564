"""Turn-subgame model and vectorized CFR solver.

The betting tree covers turn and river with one chance node per line that
reaches the river.  The solver walks the whole tree as flat arrays with one
(hands,) slab per turn-level node and one (rivers, hands) slab per
river-level node, so a single pass touches every river simultaneously.
Utilities use the half-pot convention (each player owns half the entering
pot); counterfactual values returned to callers are normalized by the pot.

Chance weights are uniform 1/|remaining deck| from the public view; private
card removal enters through per-river reach masks.  Alternating
regret-matching(+) updates, linear averaging of both strategies and root
counterfactual values from `averaging_start` on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cards import HAND_CARDS, NUM_CARDS, NUM_HANDS, make_deck, valid_hand_mask
from .strength import turn_tables

ZERO_SUM_TOL = 1e-6


# --------------------------------------------------------------- domain types


@dataclass
class SubgameSpec:
    board: np.ndarray
    pot: float
    stack: float
    range1: np.ndarray
    range2: np.ndarray

    def validate(self, deck: np.ndarray | None = None) -> None:
        board = np.asarray(self.board)
        if board.shape != (4,):
            raise ValueError("turn subgame needs a 4-card board")
        if self.pot <= 0:
            raise ValueError("pot must be positive")
        if self.stack < 0:
            raise ValueError("stack must be non-negative")
        valid = valid_hand_mask(board, deck)
        for name, rng in (("range1", self.range1), ("range2", self.range2)):
            r = np.asarray(rng)
            if r.shape != (NUM_HANDS,):
                raise ValueError(f"{name} must have {NUM_HANDS} entries")
            if np.any(r < 0):
                raise ValueError(f"{name} has negative entries")
            if np.any(r[~valid] > 0):
                raise ValueError(f"{name} puts mass on board-colliding hands")
            s = r.sum()
            if s == 0:
                raise ValueError(f"{name} is all zeros")
            if abs(s - 1.0) > 1e-9:
                raise ValueError(f"{name} sums to {s}, expected 1")


@dataclass
class CvPair:
    v1: np.ndarray
    v2: np.ndarray


@dataclass(frozen=True)
class ActionConfig:
    bet_fractions: tuple = (1.0,)
    include_allin: bool = True
    raise_cap: int = 3


DEFAULT_ACTIONS = ActionConfig()


# ----------------------------------------------------------------- tree nodes


@dataclass
class DecisionNode:
    player: int  # 1 or 2
    actions: list
    children: list
    pot: float


@dataclass
class ChanceNode:
    rivers: np.ndarray
    child: object  # identical betting structure for every river card
    pot: float


@dataclass
class FoldTerminal:
    winner: int  # 1 or 2
    amount: float  # chips the winner collects under the half-pot convention


@dataclass
class ShowdownTerminal:
    half_pot: float


@dataclass
class BettingTree:
    root: object
    spec: SubgameSpec
    actions: ActionConfig
    deck: np.ndarray

    def node_count(self) -> int:
        def count(n):
            if isinstance(n, DecisionNode):
                return 1 + sum(count(c) for c in n.children)
            if isinstance(n, ChanceNode):
                return 1 + len(n.rivers) * count(n.child)
            return 1

        return count(self.root)


def _bet_menu(pot: float, owe: float, stack_rem: float, actions: ActionConfig, raises: int):
    """Legal (label, added_now) bet/raise options, all-in merged in."""
    out = []
    if raises >= actions.raise_cap or stack_rem <= owe:
        return out
    seen = set()
    for frac in actions.bet_fractions:
        add = owe + frac * (pot + owe)
        add = min(add, stack_rem)
        if add > owe and add not in seen:
            label = "a" if add == stack_rem else f"b{frac:g}"
            out.append((label, add))
            seen.add(add)
    if actions.include_allin and stack_rem > owe and stack_rem not in seen:
        out.append(("a", stack_rem))
        seen.add(stack_rem)
    return out


def build_turn_tree(
    spec: SubgameSpec,
    actions: ActionConfig = DEFAULT_ACTIONS,
    deck: np.ndarray | None = None,
) -> BettingTree:
    """Betting on turn, a chance node per river-reaching line, then river.

    Player 1 acts first on each street.  Fold awards the winner the folder's
    matched contribution plus half the entering pot; showdowns carry half the
    final pot.  With no chips behind, streets are single check nodes.
    """
    if deck is None:
        deck = make_deck("full")
    board = np.asarray(spec.board, dtype=np.int64)
    on_board = np.isin(deck, board)
    rivers = deck[~on_board]
    half0 = spec.pot / 2.0

    def showdown(added):
        return ShowdownTerminal(half_pot=half0 + added)

    def fold_terminal(folder: int, added_folder: float):
        return FoldTerminal(winner=3 - folder, amount=half0 + added_folder)

    def street_done(street: str, pot: float, added: float):
        if street == "turn":
            return ChanceNode(rivers=rivers, child=betting("river", pot, added, 1, 0.0, 0), pot=pot)
        return showdown(added)

    def betting(street: str, pot: float, added: float, player: int, owe: float, raises: int, checked: bool = False):
        """One betting decision point.

        pot includes all chips committed so far; `added` is the acting
        player's total contribution beyond the entering pot; owe is the
        outstanding amount to call.  Opponent's contribution is added+owe.
        """
        stack_rem = spec.stack - added
        acts = []
        kids = []
        if owe == 0:
            if checked:
                acts.append("x")
                kids.append(street_done(street, pot, added))
            else:
                acts.append("x")
                kids.append(betting(street, pot, added + owe, 3 - player, 0.0, raises, checked=True))
        else:
            acts.append("f")
            kids.append(fold_terminal(player, added))
            acts.append("c")
            kids.append(street_done(street, pot + owe, added + owe))
        for label, add in _bet_menu(pot, owe, stack_rem, actions, raises):
            acts.append(label)
            kids.append(betting(street, pot + add, added + owe, 3 - player, add - owe, raises + 1))
        return DecisionNode(player=player, actions=acts, children=kids, pot=pot)

    root = betting("turn", spec.pot, 0.0, 1, 0.0, 0)
    return BettingTree(root=root, spec=spec, actions=actions, deck=deck)


# ------------------------------------------------------------- compiled game


@dataclass
class HandSpace:
    n: int
    card_pairs: np.ndarray  # (n, 2) int32, second entry -1 for one-card hands
    root_valid: np.ndarray  # (n,) bool
    n_cards: int = NUM_CARDS


def turn_hand_space(board, deck: np.ndarray) -> HandSpace:
    return HandSpace(
        n=NUM_HANDS,
        card_pairs=HAND_CARDS.astype(np.int32),
        root_valid=valid_hand_mask(board, deck),
    )


class _ShowdownIndex:
    """Sorted-order structures for O(n log n) showdown evaluation.

    Per river: hands sorted by rank with tie-group bounds, plus per-card flat
    segments so overlap corrections come from exclusive prefix sums.
    """

    def __init__(self, ranks: np.ndarray, masks: np.ndarray, card_pairs: np.ndarray):
        R = ranks.shape[0]
        so_hand, so_gs, so_ge, so_fa, so_fb = [], [], [], [], []
        fl_pos, fl_ss, fl_se = [], [], []
        fl_gs_parts, fl_ge_parts = [], []
        slot0 = [0]
        flat0 = [0]
        for r in range(R):
            vh = np.nonzero(masks[r])[0]
            rr = ranks[r, vh]
            order = np.argsort(rr, kind="stable")
            sh = vh[order].astype(np.int32)
            sr = rr[order]
            n = len(sh)
            gs = np.searchsorted(sr, sr, side="left").astype(np.int32)
            ge = np.searchsorted(sr, sr, side="right").astype(np.int32)
            a = card_pairs[sh, 0]
            b = card_pairs[sh, 1]
            two = b[0] >= 0 if n else False
            if two:
                entry_card = np.empty(2 * n, dtype=np.int32)
                entry_card[0::2] = a
                entry_card[1::2] = b
                entry_slot = np.repeat(np.arange(n, dtype=np.int32), 2)
            else:
                entry_card = a.copy()
                entry_slot = np.arange(n, dtype=np.int32)
            perm = np.argsort(entry_card, kind="stable")
            seg_slots = entry_slot[perm]
            seg_cards = entry_card[perm]
            boundaries = np.nonzero(np.diff(seg_cards))[0] + 1
            seg_off = np.concatenate([[0], boundaries, [len(seg_cards)]]).astype(np.int64)
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            base_f = flat0[-1]
            if two:
                fa = inv[0::2].astype(np.int32) + base_f
                fb = inv[1::2].astype(np.int32) + base_f
            else:
                fa = inv.astype(np.int32) + base_f
                fb = np.full(n, -1, dtype=np.int32)
            f_gs = np.empty(len(seg_slots), dtype=np.int32)
            f_ge = np.empty(len(seg_slots), dtype=np.int32)
            _kernels.build_flat_groups(
                seg_slots.astype(np.int32), seg_off, len(seg_off) - 1, gs, ge, f_gs, f_ge, base_f
            )
            ss = np.empty(len(seg_slots), dtype=np.int32)
            se = np.empty(len(seg_slots), dtype=np.int32)
            for k in range(len(seg_off) - 1):
                ss[seg_off[k] : seg_off[k + 1]] = base_f + seg_off[k]
                se[seg_off[k] : seg_off[k + 1]] = base_f + seg_off[k + 1]
            base_s = slot0[-1]
            so_hand.append(sh)
            so_gs.append(gs + base_s)
            so_ge.append(ge + base_s)
            so_fa.append(fa)
            so_fb.append(fb)
            fl_pos.append(seg_slots + base_s)
            fl_gs_parts.append(f_gs)
            fl_ge_parts.append(f_ge)
            fl_ss.append(ss)
            fl_se.append(se)
            slot0.append(base_s + n)
            flat0.append(base_f + len(seg_slots))

        def cat(parts, dtype=np.int32):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

        self.so_hand = cat(so_hand)
        self.so_gs = cat(so_gs)
        self.so_ge = cat(so_ge)
        self.so_fa = cat(so_fa)
        self.so_fb = cat(so_fb)
        self.fl_pos = cat(fl_pos)
        self.fl_gs = cat(fl_gs_parts)
        self.fl_ge = cat(fl_ge_parts)
        self.fl_ss = cat(fl_ss)
        self.fl_se = cat(fl_se)
        self.r_slot0 = np.array(slot0, dtype=np.int64)
        self.r_flat0 = np.array(flat0, dtype=np.int64)

    @staticmethod
    def empty():
        idx = _ShowdownIndex.__new__(_ShowdownIndex)
        z = np.zeros(0, dtype=np.int32)
        idx.so_hand = idx.so_gs = idx.so_ge = idx.so_fa = idx.so_fb = z
        idx.fl_pos = idx.fl_gs = idx.fl_ge = idx.fl_ss = idx.fl_se = z
        idx.r_slot0 = np.zeros(1, dtype=np.int64)
        idx.r_flat0 = np.zeros(1, dtype=np.int64)
        return idx


_DEC, _CHANCE, _FOLD, _SHOW = 0, 1, 2, 3


class CompiledGame:
    """Flat-array form of a betting tree, ready for the numba kernels."""

    def __init__(
        self,
        root,
        hands: HandSpace,
        river_masks: np.ndarray | None = None,  # (R, H) bool
        river_ranks: np.ndarray | None = None,  # (R, H)
        base_ranks: np.ndarray | None = None,  # (H,) for chance-free showdowns
    ):
        self.hands = hands
        H = hands.n
        self.H = H
        if river_masks is not None:
            self.R = river_masks.shape[0]
            self.masks = np.ascontiguousarray(river_masks, dtype=np.float32).ravel()
            self.chance_inv = 1.0 / self.R
            self.river_index = _ShowdownIndex(river_ranks, river_masks, hands.card_pairs)
        else:
            self.R = 1
            self.masks = np.ones(H, dtype=np.float32)
            self.chance_inv = 1.0
            self.river_index = _ShowdownIndex.empty()
        if base_ranks is not None:
            self.base_index = _ShowdownIndex(
                base_ranks[None, :], hands.root_valid[None, :], hands.card_pairs
            )
        else:
            self.base_index = _ShowdownIndex.empty()

        kind, actor, nact, child0, rlev, amt, evalr = [], [], [], [], [], [], []
        children: list[int] = []
        order = [(root, 0)]  # (node, river-level flag)
        pos = 0
        while pos < len(order):
            node, lev = order[pos]
            pos += 1
            if isinstance(node, DecisionNode):
                kind.append(_DEC)
                actor.append(node.player - 1)
                nact.append(len(node.actions))
                child0.append(len(children))
                for c in node.children:
                    children.append(len(order))
                    order.append((c, lev))
                amt.append(0.0)
                evalr.append(0)
            elif isinstance(node, ChanceNode):
                if lev:
                    raise ValueError("nested chance nodes are not supported")
                kind.append(_CHANCE)
                actor.append(0)
                nact.append(1)
                child0.append(len(children))
                children.append(len(order))
                order.append((node.child, 1))
                amt.append(0.0)
                evalr.append(0)
            elif isinstance(node, FoldTerminal):
                kind.append(_FOLD)
                actor.append(node.winner - 1)
                nact.append(0)
                child0.append(len(children))
                amt.append(node.amount)
                evalr.append(0)
            elif isinstance(node, ShowdownTerminal):
                kind.append(_SHOW)
                actor.append(0)
                nact.append(0)
                child0.append(len(children))
                amt.append(node.half_pot)
                evalr.append(1 if lev else 0)
                if lev and river_masks is None:
                    raise ValueError("river showdown without river tables")
                if not lev and base_ranks is None:
                    raise ValueError("top-level showdown without base ranks")
            else:
                raise TypeError(f"unknown node {type(node)}")
            rlev.append(lev)

        n = len(kind)
        self.kind = np.array(kind, dtype=np.int8)
        self.actor = np.array(actor, dtype=np.int8)
        self.nact = np.array(nact, dtype=np.int16)
        self.child0 = np.array(child0, dtype=np.int64)
        self.children = np.array(children, dtype=np.int64)
        self.rlev = np.array(rlev, dtype=np.int8)
        self.amt = np.array(amt, dtype=np.float64)
        self.evalr = np.array(evalr, dtype=np.int8)
        self.slab_len = np.where(self.rlev == 1, self.R * H, H).astype(np.int64)
        self.slab = np.zeros(n, dtype=np.int64)
        self.slab[1:] = np.cumsum(self.slab_len)[:-1]
        total = int(self.slab_len.sum())
        self.reg = np.zeros(n, dtype=np.int64)
        off = 0
        for i in range(n):
            if self.kind[i] == _DEC:
                self.reg[i] = off
                off += int(self.nact[i]) * int(self.slab_len[i])
        self.reg_total = off
        self.slab_total = total
        self.hc0 = hands.card_pairs[:, 0].astype(np.int32).copy()
        self.hc1 = hands.card_pairs[:, 1].astype(np.int32).copy()

    def decision_nodes(self) -> np.ndarray:
        return np.nonzero(self.kind == _DEC)[0]


@dataclass
class StrategyProfile:
    """A complete behavioral strategy over a compiled game (f32 arena)."""

    game: CompiledGame
    strat: np.ndarray


class CfrSolver:
    """Alternating-update CFR(+) over a compiled game.

    Exposes incremental `run` so callers can snapshot convergence, the
    averaged root counterfactual values, the average strategy, and exact
    best-response exploitability.
    """

    def __init__(
        self,
        game: CompiledGame,
        r1: np.ndarray,
        r2: np.ndarray,
        averaging_start: int = 0,
        plus_variant: bool = True,
    ):
        self.g = game
        self.avg_start = averaging_start
        self.plus = plus_variant
        g = game
        self.regrets = np.zeros(g.reg_total, dtype=np.float32)
        self.strat = np.zeros(g.reg_total, dtype=np.float32)
        self.ssum = np.zeros(g.reg_total, dtype=np.float64)
        self.reach0 = np.zeros(g.slab_total, dtype=np.float32)
        self.reach1 = np.zeros(g.slab_total, dtype=np.float32)
        self.cv0 = np.zeros(g.slab_total, dtype=np.float64)
        self.cv1 = np.zeros(g.slab_total, dtype=np.float64)
        self.cards_scratch = np.zeros(hands_cards_len(g), dtype=np.float64)
        ns = max(int(g.river_index.r_slot0[-1]), int(g.base_index.r_slot0[-1]), 1)
        nf = max(int(g.river_index.r_flat0[-1]), int(g.base_index.r_flat0[-1]), 1)
        self.sw = np.zeros(ns, dtype=np.float64)
        self.pre = np.zeros(ns + 1, dtype=np.float64)
        self.fw = np.zeros(nf, dtype=np.float64)
        self.fpre = np.zeros(nf + 1, dtype=np.float64)
        valid = g.hands.root_valid
        self.r1 = np.where(valid, np.asarray(r1, dtype=np.float64), 0.0)
        self.r2 = np.where(valid, np.asarray(r2, dtype=np.float64), 0.0)
        self.t = 0
        self.wsum = 0.0
        self.acc1 = np.zeros(g.H, dtype=np.float64)
        self.acc2 = np.zeros(g.H, dtype=np.float64)

    # ------------------------------------------------------------- internals

    def _forward(self, use_given: int, br_player: int, acc_ssum: int, w: float):
        g = self.g
        root = g.slab[0]
        self.reach0[root : root + g.H] = self.r1
        self.reach1[root : root + g.H] = self.r2
        _kernels.cfr_forward(
            g.kind, g.actor, g.nact, g.child0, g.children, g.slab, g.slab_len, g.reg,
            self.regrets, self.strat, self.ssum, self.reach0, self.reach1,
            g.masks, g.R, g.H, use_given, br_player, acc_ssum, w,
        )

    def _backward(self, compute0: int, compute1: int, update_player: int, br_player: int):
        g = self.g
        ri = g.river_index
        bi = g.base_index
        _kernels.cfr_backward(
            g.kind, g.actor, g.nact, g.child0, g.children, g.slab, g.slab_len, g.reg, g.rlev,
            self.regrets, self.strat, self.cv0, self.cv1, self.reach0, self.reach1,
            g.masks, g.chance_inv, g.R, g.H,
            compute0, compute1, update_player, 1 if self.plus else 0, br_player,
            g.amt, g.evalr, g.hc0, g.hc1, self.cards_scratch,
            ri.so_hand, ri.so_gs, ri.so_ge, ri.so_fa, ri.so_fb,
            ri.fl_pos, ri.fl_gs, ri.fl_ge, ri.fl_ss, ri.fl_se, ri.r_slot0, ri.r_flat0,
            bi.so_hand, bi.so_gs, bi.so_ge, bi.so_fa, bi.so_fb,
            bi.fl_pos, bi.fl_gs, bi.fl_ge, bi.fl_ss, bi.fl_se, bi.r_slot0, bi.r_flat0,
            self.sw, self.pre, self.fw, self.fpre,
        )

    def _root_cv(self, player: int) -> np.ndarray:
        g = self.g
        root = g.slab[0]
        cv = self.cv0 if player == 0 else self.cv1
        out = cv[root : root + g.H].copy()
        out[~g.hands.root_valid] = 0.0
        return out

    # ------------------------------------------------------------ public api

    def run(self, iterations: int) -> None:
        for _ in range(iterations):
            t = self.t
            active = t >= self.avg_start
            w = float(t - self.avg_start + 1) if self.plus else 1.0
            if not active:
                w = 0.0
            # update player 1's regrets under the current profile
            self._forward(0, -1, 0, 0.0)
            self._backward(1, 0, 0, -1)
            # player 2's pass sees player 1's refreshed strategy; both CV
            # vectors come from this one consistent profile
            self._forward(0, -1, 1 if active else 0, w)
            self._backward(1 if active else 0, 1, 1, -1)
            if active:
                self.acc1 += w * self._root_cv(0)
                self.acc2 += w * self._root_cv(1)
                self.wsum += w
            self.t += 1

    def cv_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """Averaged root counterfactual values (chip units)."""
        if self.wsum == 0:
            raise RuntimeError("no iterations past averaging_start yet")
        return self.acc1 / self.wsum, self.acc2 / self.wsum

    def average_strategy(self) -> StrategyProfile:
        g = self.g
        strat = np.zeros_like(self.strat)
        for i in g.decision_nodes():
            A = int(g.nact[i])
            L = int(g.slab_len[i])
            o = int(g.reg[i])
            block = self.ssum[o : o + A * L].reshape(A, L)
            tot = block.sum(axis=0)
            cols = tot > 0
            out = np.full((A, L), 1.0 / A, dtype=np.float32)
            out[:, cols] = (block[:, cols] / tot[cols]).astype(np.float32)
            strat[o : o + A * L] = out.ravel()
        return StrategyProfile(game=g, strat=strat)

    def positive_regret_mean(self) -> float:
        return float(np.maximum(self.regrets, 0.0).mean())

    def best_response_values(self, profile: StrategyProfile | None = None) -> tuple[float, float]:
        """Exact best-response value per player against the average strategy."""
        if profile is None:
            profile = self.average_strategy()
        saved = self.strat
        self.strat = profile.strat
        out = []
        for q in (0, 1):
            self._forward(1, q, 0, 0.0)
            self._backward(1 if q == 0 else 0, 1 if q == 1 else 0, -1, q)
            cv = self._root_cv(q)
            rng = self.r1 if q == 0 else self.r2
            out.append(float(np.dot(rng, cv)))
        self.strat = saved
        return out[0], out[1]


def hands_cards_len(game: CompiledGame) -> int:
    return int(max(game.hands.n_cards, 1))


# ------------------------------------------------------------ public wrappers


def compile_turn_game(tree: BettingTree) -> CompiledGame:
    board = np.asarray(tree.spec.board, dtype=np.int64)
    rivers, ranks, masks = turn_tables(board, tree.deck)
    hands = turn_hand_space(board, tree.deck)
    return CompiledGame(tree.root, hands, river_masks=masks, river_ranks=ranks)


def make_solver(
    tree: BettingTree,
    spec: SubgameSpec,
    iterations: int = 1000,
    averaging_start: int = 500,
    plus_variant: bool = True,
) -> CfrSolver:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0 <= averaging_start < iterations:
        raise ValueError("averaging_start must lie in [0, iterations)")
    spec.validate(tree.deck)
    game = compile_turn_game(tree)
    return CfrSolver(game, spec.range1, spec.range2, averaging_start, plus_variant)


def cfr_solve(
    tree: BettingTree,
    spec: SubgameSpec,
    iterations: int = 1000,
    averaging_start: int = 500,
    plus_variant: bool = True,
) -> CvPair:
    """Solve a turn subgame; returns pot-normalized root CV vectors."""
    solver = make_solver(tree, spec, iterations, averaging_start, plus_variant)
    solver.run(iterations)
    v1, v2 = solver.cv_pair()
    return CvPair(v1=v1 / spec.pot, v2=v2 / spec.pot)


def best_response(tree: BettingTree, spec: SubgameSpec, strategy: StrategyProfile) -> float:
    """Exploitability of a strategy profile, in pot units (>= 0 at accuracy)."""
    spec.validate(tree.deck)
    solver = CfrSolver(strategy.game, spec.range1, spec.range2)
    br1, br2 = solver.best_response_values(strategy)
    return (br1 + br2) / 2.0 / spec.pot


def uniform_profile(game: CompiledGame) -> StrategyProfile:
    strat = np.zeros(game.reg_total, dtype=np.float32)
    for i in game.decision_nodes():
        A = int(game.nact[i])
        L = int(game.slab_len[i])
        o = int(game.reg[i])
        strat[o : o + A * L] = 1.0 / A
    return StrategyProfile(game=game, strat=strat)
