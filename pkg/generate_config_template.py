import json
import sys

from pydantic import BaseModel

from fas_toolbox.config import Config


def toml_value(value) -> str:
    """
    Render a scalar or a list of scalars as TOML.

    JSON strings, numbers, booleans and flat arrays are valid TOML values.
    """
    return json.dumps(value, ensure_ascii=False)


def render_section(name: str, values: dict) -> list[str]:
    lines = [f"[{name}]"]
    tables = []
    for key, value in values.items():
        if isinstance(value, list) and value and isinstance(value[0], dict):
            tables.append((key, value))
        elif value is not None:
            lines.append(f"{key} = {toml_value(value)}")
    for key, items in tables:
        for item in items:
            lines.extend(["", f"[[{name}.{key}]]"])
            lines.extend(f"{k} = {toml_value(v)}" for k, v in item.items())
    return lines


if __name__ == "__main__":
    profile = sys.argv[1] if len(sys.argv) > 1 else "desk_scale"
    config = Config.for_profile(profile)
    values = config.model_dump(mode="json", exclude={"output_root"})

    lines = []
    for key, value in values.items():
        if not isinstance(getattr(config, key), BaseModel):
            lines.append(f"{key} = {toml_value(value)}")
    for key, value in values.items():
        if isinstance(getattr(config, key), BaseModel):
            lines.extend(["", *render_section(key, value)])

    print("\n".join(lines))
