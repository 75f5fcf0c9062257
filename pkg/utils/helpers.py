import re

from services.errors import ConfigError, SubsetError, TargetError

RANDOM_REFERENCE = re.compile(r"^random:(\d+),\[([\d,\s]+)\],(\d+)$")


def parse_subset(text):
    """'1,2' -> (1, 2)"""
    try:
        values = tuple(int(part) for part in str(text).replace(" ", "").split(",") if part)
    except ValueError:
        raise SubsetError(f"could not parse subset {text!r}; expected comma-separated coordinates like 1,2")
    if not values:
        raise SubsetError(f"empty subset {text!r}")
    return values


def parse_family(text):
    """'1;2,3' -> [(1,), (2, 3)]"""
    return [parse_subset(part) for part in str(text).split(";") if part.strip()]


def parse_partition(text):
    """'1|2|3' -> ((1,), (2,), (3,)); W may be empty as in '1|2|'"""
    parts = str(text).split("|")
    if len(parts) != 3:
        raise SubsetError(f"partition {text!r} must have the form U|V|W")
    return tuple(parse_subset(p) if p.strip() else () for p in parts)


def parse_weights(text):
    try:
        return tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError:
        raise SubsetError(f"could not parse weights {text!r}")


def parse_order(text):
    """'213' or '2,1,3' -> (2, 1, 3)"""
    text = str(text)
    if "," in text:
        return parse_subset(text)
    if not text.isdigit():
        raise SubsetError(f"could not parse ordering {text!r}; expected digits like 213")
    return tuple(int(ch) for ch in text)


def parse_random_reference(text):
    """'random:K,[s1,...,sK],seed' -> (sizes, seed)"""
    match = RANDOM_REFERENCE.match(str(text).replace(" ", ""))
    if not match:
        raise TargetError(f"random target {text!r} must look like random:3,[2,2,2],42")
    K = int(match.group(1))
    sizes = [int(s) for s in match.group(2).split(",") if s]
    if len(sizes) != K:
        raise TargetError(f"sizes: random target declares K={K} but lists {len(sizes)} sizes")
    return sizes, int(match.group(3))


def parse_tolerance_overrides(items):
    """['spectral=1e-9', ...] -> {'spectral': 1e-9}"""
    overrides = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override {item!r} must be name=value")
        try:
            overrides[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance {name!r} has non-numeric value {value!r}")
    return overrides


def format_subsets(subsets):
    return ";".join(",".join(str(i) for i in s) for s in subsets)


def default_families(K):
    """Families exercised by the suites for a K-coordinate target"""
    if K == 2:
        return [[(1,), (2,)]]
    if K == 3:
        return [[(1,), (2,), (3,)], [(1, 2), (2, 3)], [(1,), (1, 2), (3,)]]
    singles = [(i,) for i in range(1, K + 1)]
    return [singles, [tuple(range(1, K)), (K,)], [(1, 2), tuple(range(2, K + 1))]]
