# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

import threading
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from coreason_arcfdr.evalharness import TruthModel
from coreason_arcfdr.synth import default_hiv_standin, load_alarm, load_network_spec
from coreason_arcfdr.utils.logger import logger

TruthFactory = Callable[[int], TruthModel]


class NetworkRegistry:
    """Singleton registry of named generating models.

    Built-in entries are `alarm` and `hiv-standin`. Models are built on first use and
    cached per (name, seed); factories receive the seed.
    """

    _instance: Optional["NetworkRegistry"] = None
    _lock: threading.Lock = threading.Lock()
    _initialized: bool = False

    def __new__(cls) -> "NetworkRegistry":
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super(NetworkRegistry, cls).__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        if self._initialized:
            return
        with self._lock:
            if self._initialized:  # pragma: no cover
                return
            self._factories: Dict[str, TruthFactory] = {}
            self._cache: Dict[Tuple[str, int], TruthModel] = {}
            self._register_builtins()
            self._initialized = True
            logger.info("NetworkRegistry initialized")

    def _register_builtins(self) -> None:
        self._factories["alarm"] = lambda seed: load_alarm()
        self._factories["hiv-standin"] = lambda seed: default_hiv_standin(seed)

    def register(self, name: str, factory: TruthFactory) -> None:
        """Registers a factory; an existing entry of the same name is replaced."""
        with self._lock:
            self._factories[name] = factory
            self._cache = {key: model for key, model in self._cache.items() if key[0] != name}
            logger.debug(f"Registered network: {name}")

    def names(self) -> List[str]:
        with self._lock:
            return sorted(self._factories)

    def get(self, name: str, seed: int = 0) -> TruthModel:
        """Returns the named model, building it on first use.

        Raises:
            KeyError: If no model of that name is registered.
        """
        with self._lock:
            if (name, seed) in self._cache:
                return self._cache[(name, seed)]
            factory = self._factories.get(name)
        if factory is None:
            raise KeyError(f"unknown network {name!r}; registered: {self.names()}")
        model = factory(seed)
        with self._lock:
            return self._cache.setdefault((name, seed), model)

    def resolve(self, name_or_path: str, seed: int = 0) -> TruthModel:
        """A registered name, or else a network-spec file path."""
        if name_or_path in self.names():
            return self.get(name_or_path, seed)
        path = Path(name_or_path)
        if not path.is_file():
            raise KeyError(f"{name_or_path!r} is neither a registered network nor a spec file")
        return load_network_spec(path)

    def clear(self) -> None:
        """Drops cached models and restores the built-in entries only."""
        with self._lock:
            self._factories.clear()
            self._cache.clear()
            self._register_builtins()
            logger.debug("NetworkRegistry cleared")
