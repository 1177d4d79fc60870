"""
Data loading module.
Reads delimited survival datasets, the experiment defaults in Config.json and
key=value network configuration files, with file names configurable via .env.
"""
from __future__ import annotations
import json
import os
import re
import logging
from typing import Any, Dict, Optional
import numpy as np
import pandas as pd
from errors import ConfigurationError, ParseError, SchemaError, ValidationError
from models import ColumnSchema, Dataset, NetConfig
import settings

logger = logging.getLogger('SurvBand')


class DataLoader:
    """Handles loading and parsing of data and configuration files."""

    def __init__(self, directory: str):
        self.directory = str(directory)
        logger.debug(f"DataLoader initialized with directory: {directory}")

    def resolve(self, filename: str) -> str:
        """Absolute paths are used directly; relative ones are joined with the directory."""
        return filename if os.path.isabs(filename) else os.path.join(self.directory, filename)

    def resolve_data(self, filename: str) -> str:
        """Like resolve, but a relative name found in the working directory wins over the data directory."""
        if not os.path.isabs(filename) and os.path.exists(filename):
            return os.path.abspath(filename)
        return self.resolve(filename)

    def load_json(self, filename: str) -> Dict[str, Any]:
        """Load and parse a JSON file.

        Raises:
            FileNotFoundError: If the file doesn't exist.
            ConfigurationError: If the file contains invalid JSON.
        """
        file_path = self.resolve(filename)
        logger.debug(f"Loading JSON file: {file_path}")
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            logger.error(f"File not found: {file_path}")
            raise FileNotFoundError(f"File not found: {file_path}")
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in {filename}: {e.msg}")
            raise ConfigurationError(f"Invalid JSON in {filename}: {e.msg} (line {e.lineno})")
        logger.info(f"Successfully loaded {os.path.basename(file_path)}")
        return data

    def load_config(self) -> Dict[str, Any]:
        """Load experiment defaults from Config.json.

        Returns:
            Dictionary of ExperimentConfig fields (with an optional nested 'net').
        """
        config = self.load_json(settings.CONFIG_JSON)
        logger.debug(f"Configuration loaded: {sorted(config)}")
        return config

    def load_net_config(self, filename: Optional[str] = None) -> NetConfig:
        """Load a NetConfig from a plain-text key=value file.

        Blank lines and lines starting with '#' are ignored.

        Raises:
            FileNotFoundError: If the file doesn't exist.
            ConfigurationError: Malformed line, unknown key or invalid value.
        """
        file_path = self.resolve(filename or settings.NET_CONFIG)
        if not os.path.exists(file_path):
            logger.error(f"File not found: {file_path}")
            raise FileNotFoundError(f"File not found: {file_path}")
        values: Dict[str, str] = {}
        with open(file_path, 'r', encoding='utf-8') as f:
            for line_no, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line or line.startswith('#'):
                    continue
                if '=' not in line:
                    logger.error(f"{file_path}:{line_no}: expected key=value")
                    raise ConfigurationError(f"{file_path}:{line_no}: expected key=value, got {line!r}")
                key, value = (part.strip() for part in line.split('=', 1))
                try:
                    NetConfig.from_dict({key: value})
                except ConfigurationError as e:
                    logger.error(f"{file_path}:{line_no}: {e}")
                    raise ConfigurationError(f"{file_path}:{line_no}: {e}")
                values[key] = value
        try:
            net = NetConfig.from_dict(values)
        except ConfigurationError as e:
            logger.error(f"Invalid network configuration in {file_path}: {e}")
            raise
        logger.info(f"Loaded network configuration from {os.path.basename(file_path)}")
        return net

    def load_delimited(self, filename: str, schema: ColumnSchema) -> Dataset:
        """Load a comma-separated survival dataset.

        Rows keep file order; the event column must hold 0/1; no
        standardization is applied.

        Args:
            filename: CSV file with a header row; relative names are looked up in
                the working directory first, then in the data directory.
            schema: Names of the time, event and feature columns.

        Returns:
            Dataset with one record per data row.

        Raises:
            SchemaError: Empty file, a named column is missing, or no feature is named.
            ParseError: Missing, non-numeric or non-finite cell, ragged row or invalid
                UTF-8 (carries the row index when known).
            ValidationError: Negative time, event outside {0,1}, or no events.
        """
        file_path = self.resolve_data(filename)
        if not schema.features:
            raise SchemaError("Schema must name at least one feature column")
        if not os.path.exists(file_path):
            logger.error(f"File not found: {file_path}")
            raise FileNotFoundError(f"File not found: {file_path}")

        logger.debug(f"Loading delimited file: {file_path}")
        try:
            frame = pd.read_csv(file_path, sep=',', encoding='utf-8', dtype=str,
                                keep_default_na=False, skipinitialspace=True)
        except pd.errors.EmptyDataError:
            logger.error(f"No header or data in {file_path}")
            raise SchemaError(f"No columns found in {os.path.basename(file_path)}")
        except pd.errors.ParserError as e:
            logger.error(f"Malformed CSV {file_path}: {e}")
            raise ParseError(f"Malformed row: {str(e).strip()}", row=self._parser_error_row(str(e)))
        except UnicodeDecodeError as e:
            logger.error(f"{file_path} is not valid UTF-8: {e.reason}")
            raise ParseError(f"Invalid UTF-8 at byte {e.start}", row=None)
        wanted = [schema.time_col, schema.event_col, *schema.features]
        missing = [col for col in wanted if col not in frame.columns]
        if missing:
            logger.error(f"Missing columns in {file_path}: {missing}")
            raise SchemaError(f"Missing columns: {', '.join(missing)}")
        if len(set(wanted)) != len(wanted):
            raise SchemaError("Time, event and feature columns must be distinct")

        numeric = {col: self._numeric_column(frame[col], col) for col in wanted}

        time = numeric[schema.time_col]
        negative = np.flatnonzero(time < 0)
        if negative.size:
            logger.error(f"Negative time at row {negative[0]}")
            raise ValidationError(f"Negative observed time at row {negative[0]}")

        event = numeric[schema.event_col]
        bad_event = np.flatnonzero((event != 0) & (event != 1))
        if bad_event.size:
            logger.error(f"Event value outside {{0,1}} at row {bad_event[0]}")
            raise ValidationError(f"Event value {event[bad_event[0]]} outside {{0,1}} at row {bad_event[0]}")

        x = np.column_stack([numeric[col] for col in schema.features])
        dataset = Dataset(x, time, event.astype(bool), list(schema.features))
        dataset.require_events()
        logger.info(f"Loaded {dataset.n} records with {dataset.d} features from {os.path.basename(file_path)} "
                    f"(censoring {dataset.censoring_fraction:.2f})")
        return dataset

    @staticmethod
    def _numeric_column(column: pd.Series, name: str) -> np.ndarray:
        """Convert a string column to float, reporting the first bad row."""
        stripped = column.str.strip()
        empty = np.flatnonzero(stripped.eq('').to_numpy())
        if empty.size:
            raise ParseError("Missing value", row=int(empty[0]), column=name)
        values = pd.to_numeric(stripped, errors='coerce').to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ParseError(f"Non-numeric or non-finite value {column.iloc[bad[0]]!r}",
                             row=int(bad[0]), column=name)
        return values

    @staticmethod
    def _parser_error_row(message: str) -> Optional[int]:
        """Data row from a pandas tokenizer message ('... in line 3, saw 4'); line 1 is the header."""
        match = re.search(r'line (\d+)', message)
        return int(match.group(1)) - 2 if match else None

    @staticmethod
    def get_current_directory() -> str:
        """Get the data directory, where relative data and config files are resolved."""
        return str(settings.DATA_DIR)
