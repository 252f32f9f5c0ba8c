from typing import Dict, List, Tuple

from loguru import logger


def extract_cores_from_options(options: List[str]) -> Tuple[List[str], int]:
    """
    Extract the number of cores from the snakemake options.
    """
    options = list(options)
    for flag in ("-c", "--cores"):
        if flag not in options:
            continue

        position = options.index(flag)
        try:
            cores = int(options[position + 1])
        except IndexError:
            logger.warning("Core flag provided but no value given. Defaulting to 1 core.")
            return [o for i, o in enumerate(options) if i != position], 1

        return [o for i, o in enumerate(options) if i not in (position, position + 1)], cores

    logger.warning("No core flag provided. Defaulting to 1 core.")
    return options, 1


def is_on(param: str) -> bool:
    """
    Returns True if parameter in "on" values
    On values:
        - true
        - t
        - on
        - yes
        - y
        - 1
    """
    return str(param).lower() in ["true", "t", "on", "yes", "y", "1"]


def is_off(param: str) -> bool:
    """Returns True if parameter in "off" values"""
    return str(param).lower() in ["", "none", "f", "n", "no", "false", "0"]


def format_config_dict(config: Dict) -> Dict:
    """
    Coerces yes/no style entries to booleans, recursing into nested sections.
    Lists and numbers are left as they are.
    """
    for key, value in config.items():
        if isinstance(value, dict):
            config[key] = format_config_dict(value)
        elif isinstance(value, (list, int, float)) and not isinstance(value, bool):
            continue
        elif is_on(value):
            config[key] = True
        elif is_off(value):
            config[key] = False

    return config


def parse_int_list(value: str) -> List[int]:
    """Parse "50,100, 200" into [50, 100, 200]."""
    try:
        return [int(v) for v in str(value).replace(" ", "").split(",") if v]
    except ValueError:
        raise ValueError(f"Expected a comma separated list of integers, got {value!r}")
