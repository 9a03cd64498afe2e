from pathlib import Path

from asmweave.parser import MachineDef, parse_machine

MODELS = Path(__file__).resolve().parent.parent / "src" / "asmweave" / "models"


def load_model(name: str) -> MachineDef:
    return parse_machine((MODELS / name).read_text(encoding="utf-8"))


def model_path(name: str) -> Path:
    return MODELS / name
