__all__ = ["load_reports", "save_reports", "save_results", "save_table"]


# standard library
from json import dump
from pathlib import Path
from typing import Any, Union


# dependencies
import pandas as pd
import xarray as xr


# type hints
PathLike = Union[Path, str]


def save_reports(reports: xr.Dataset, path: PathLike) -> None:
    """Save per-fold reports (xarray Dataset) to a netCDF."""
    reports.to_netcdf(path)


def load_reports(path: PathLike) -> xr.Dataset:
    """Load per-fold reports from a netCDF to an xarray Dataset."""
    with xr.open_dataset(path) as reports:
        return reports.load()


def save_results(results: dict[str, Any], path: PathLike) -> None:
    """Save a results mapping to a JSON file."""
    with open(path, "w") as file:
        dump(results, file, indent=2, allow_nan=True)


def save_table(table: pd.DataFrame, path: PathLike) -> None:
    """Save a table to a CSV file without the index."""
    table.to_csv(path, index=False)
