"""Variable ordering and the three value-ordering heuristics."""

from __future__ import annotations

from .constraints import followup_terms
from .model import gp_reward

LOCAL_HEURISTICS = ("err-reduction", "gp-ranked-choice", "gp-count")


def choose_variable_chrono(ctx, st):
    """Open variable with the smallest tick; satellites break ties by id."""
    for key in st.open_keys(ctx):
        return key
    return None


def err_reduction_reward(ctx, st, key, option, gps, only_counted=True) -> float:
    """Error reduction summed over the live GPs, priced at the node's current priors."""
    tick = key[0]
    res = st.reservations.get(key)
    total = 0.0
    for g in gps:
        if only_counted and not ctx.counts(g):
            continue
        if res is not None and res.required_gp == g:
            prior, meas = followup_terms(ctx, res, tick, option)
        else:
            prior, meas = ctx.prior(g, tick), option.errors[g]
        total += gp_reward(prior, meas)
    return total


def ranked_choice_reward(ctx, key, option, gps) -> float:
    """Sum of each GP's ballot score for this command, (n - pos) / n."""
    tick, sat = key
    sig = option.signature
    ranks = ctx.ranks
    return sum(ranks.get((g, sat, tick, sig), 0.0) for g in gps if ctx.counts(g))


def gp_count_reward(ctx, gps) -> int:
    return sum(1 for g in gps if ctx.counts(g))


def _live(ctx, st, key):
    dom = st.domain(ctx, key)
    opts = ctx.options[key]
    return [(opts[i], gps) for i, gps in enumerate(dom) if gps is not None]


def sort_values_err_reduction(ctx, st, key) -> list:
    live = _live(ctx, st, key)
    return sorted(live, key=lambda og: -err_reduction_reward(ctx, st, key, og[0], og[1]))


def sort_values_gp_ranked_choice(ctx, st, key) -> list:
    live = _live(ctx, st, key)
    return sorted(live, key=lambda og: -ranked_choice_reward(ctx, key, og[0], og[1]))


def sort_values_gp_count(ctx, st, key) -> list:
    live = _live(ctx, st, key)
    return sorted(live, key=lambda og: -gp_count_reward(ctx, og[1]))


VALUE_SORTERS = {
    "err-reduction": sort_values_err_reduction,
    "gp-ranked-choice": sort_values_gp_ranked_choice,
    "gp-count": sort_values_gp_count,
}
