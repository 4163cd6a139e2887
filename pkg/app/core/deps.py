"""
Stage-input resolution shared by the commands: every loader raises
MissingInputError (exit 3) when the artifact it needs is absent.
"""
from pathlib import Path
from typing import List, Optional, Union

from app.core.exceptions import MissingInputError
from app.models import DynamicsModel
from app.schemas.configspace import ConfigurationSpace
from app.schemas.dynamics import Dataset
from app.schemas.portfolio import Portfolio
from app.services.configspace_service import ConfigSpaceService
from app.services.dynamics_service import DynamicsService
from app.services.portfolio_service import PortfolioService
from app.services.sysid_service import SysIdService

PathLike = Union[str, Path]


def get_dataset(path: PathLike) -> Dataset:
    return DynamicsService.read_dataset(path)


def get_datasets(directory: PathLike) -> List[Dataset]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(f"Dataset directory not found: {directory}")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise MissingInputError(f"No dataset files (*.csv) in {directory}")
    return [DynamicsService.read_dataset(f) for f in files]


def get_space(path: Optional[PathLike] = None) -> ConfigurationSpace:
    if path is None:
        return SysIdService.default_space()
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"Configuration space file not found: {path}")
    return ConfigSpaceService.load_space(path)


def get_portfolio(path: PathLike) -> Portfolio:
    return PortfolioService.read_portfolio(path)


def get_model(path: PathLike) -> DynamicsModel:
    return SysIdService.load_model(path)
