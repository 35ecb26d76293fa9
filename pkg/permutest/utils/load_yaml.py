from pathlib import Path

import yaml

current_file = Path(__file__)


class ConfigFilePath:
    general = current_file.parent.parent / "config.yaml"
    plans = current_file.parent.parent / "core/plans"


def load_config(config_type: str):
    """
    It currently supports one type of config file:

    1. `general` which points to the main config.yaml file

    Bundled simulation plans live next to it under `core/plans/` and are read
    through `load_yaml_file`.
    """
    try:
        config_path = getattr(ConfigFilePath, config_type)
    except AttributeError:
        raise ValueError(f"Invalid config type '{config_type}'")

    if config_path.is_dir():
        raise ValueError(f"Config type '{config_type}' is a directory, not a file")

    return load_yaml_file(config_path)


def load_yaml_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)


def bundled_plan_path(name: str) -> Path:
    """
    Resolves a bundled plan name like `table1_row4` to its YAML file
    """
    return ConfigFilePath.plans / f"{name}.yaml"


def bundled_plan_names() -> list:
    return sorted(p.stem for p in ConfigFilePath.plans.glob("*.yaml"))
