"""Brute-force reference implementation of the selection stages.

Re-derives base model, exploration range, eligible set, utilities and
probabilities from the formulas directly, with plain loops over plain dicts.
Deliberately shares no code with the package so it can serve as an
independent oracle; both sub-conditions of eligibility (mean inside the
exploration range, mean + std under the upper limit) are applied explicitly.

Model dicts carry: name, top1, top5 (fractions), mean, std (ms).
"""


def reference_selection(
    models,
    upper,
    lower,
    metric="top1",
    include_base=True,
    epsilon=1e-3,
):
    """Full stage-by-stage reference result as a plain dict."""
    if not models:
        raise ValueError("no models")

    # Stage 1: most accurate model with mean+std < upper and mean-std < lower;
    # ties by smaller mean then name.
    feasible = []
    for m in models:
        ok_upper = m["mean"] + m["std"] < upper
        ok_lower = m["mean"] - m["std"] < lower
        if ok_upper and ok_lower:
            feasible.append(m)

    if not feasible:
        fastest = models[0]
        for m in models[1:]:
            if m["mean"] < fastest["mean"] or (
                m["mean"] == fastest["mean"] and m["name"] < fastest["name"]
            ):
                fastest = m
        return {
            "fallback": True,
            "base": None,
            "t_e": None,
            "eligible": [fastest["name"]],
            "utilities": {},
            "probabilities": {fastest["name"]: 1.0},
        }

    base = feasible[0]
    for m in feasible[1:]:
        a, b = m[metric], base[metric]
        if a > b:
            base = m
        elif a == b:
            if m["mean"] < base["mean"] or (
                m["mean"] == base["mean"] and m["name"] < base["name"]
            ):
                base = m

    # Stage 2: exploration range from the base profile, then the eligible set.
    mu, sigma = base["mean"], base["std"]
    if lower > mu:
        t_low, t_high = mu + sigma, 2.0 * lower - mu + sigma
    else:
        t_low, t_high = 2.0 * lower - mu + sigma, mu + sigma

    eligible = {}
    for m in models:
        in_range = t_low <= m["mean"] <= t_high
        under_upper = m["mean"] + m["std"] < upper
        if in_range and under_upper:
            eligible[m["name"]] = m
    if include_base:
        eligible[base["name"]] = base

    # Stage 3: utility = accuracy * slack under upper / distance from lower.
    utilities = {}
    for name, m in eligible.items():
        numerator = upper - (m["mean"] + m["std"])
        denominator = abs(lower - m["mean"])
        if denominator < epsilon:
            denominator = epsilon
        utilities[name] = m[metric] * numerator / denominator

    total = sum(utilities.values())
    if total > 0.0:
        probabilities = {name: u / total for name, u in utilities.items()}
    else:
        probabilities = {name: 1.0 / len(eligible) for name in eligible}

    return {
        "fallback": False,
        "base": base["name"],
        "t_e": (t_low, t_high),
        "eligible": sorted(eligible),
        "utilities": utilities,
        "probabilities": probabilities,
    }
