# scenario_file.py

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from farfield_doa.errors import ScenarioFormatError
from farfield_doa.scenario import (
    NOISE_KINDS,
    PAIRING_KINDS,
    UNIT_MODES,
    Emitter,
    NoiseModel,
    PairingScheme,
    Receiver,
    Scenario,
    UnitConvention,
)

logger = logging.getLogger(__name__)

YAML_SUFFIXES = ('.yaml', '.yml')

TOP_LEVEL_FIELDS = {'dim', 'receivers', 'emitter', 'pairing', 'noise', 'units'}
RECEIVER_FIELDS = {'position', 'velocity'}
EMITTER_FIELDS = {'position'}
PAIRING_FIELDS = {'kind', 'ref_index', 'pairs'}
NOISE_FIELDS = {'kind', 'sigma', 'Q', 'seed'}
UNITS_FIELDS = {'mode', 'f0', 'c'}


class ScenarioReader:
    """Strict reader for the scenario file schema; indices are 1-based in files."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def _error(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        return ScenarioFormatError(message, path=self.path, line=line, field=field)

    def read_document(self) -> Dict[str, Any]:
        try:
            text = self.path.read_text(encoding='utf-8')
        except UnicodeDecodeError as e:
            raise self._error(f"file is not valid UTF-8: {e}")

        if self.path.suffix.lower() in YAML_SUFFIXES:
            try:
                document = yaml.safe_load(text)
            except yaml.MarkedYAMLError as e:
                line = e.problem_mark.line + 1 if e.problem_mark is not None else None
                raise self._error(f"YAML parse error: {e.problem}", line=line)
            except yaml.YAMLError as e:
                raise self._error(f"YAML parse error: {e}")
        else:
            try:
                document = json.loads(text)
            except json.JSONDecodeError as e:
                raise self._error(f"JSON parse error: {e.msg} (column {e.colno})", line=e.lineno)

        if not isinstance(document, dict):
            raise self._error("top level must be an object")
        return document

    def _check_fields(self, section: Dict[str, Any], allowed: set, name: str):
        unknown = sorted(set(section) - allowed)
        if unknown:
            field = f"{name}.{unknown[0]}" if name else unknown[0]
            raise self._error(f"unknown field (allowed: {', '.join(sorted(allowed))})", field=field)

    def _section(self, document: Dict[str, Any], key: str, allowed: set) -> Optional[Dict[str, Any]]:
        if key not in document or document[key] is None:
            return None
        section = document[key]
        if not isinstance(section, dict):
            raise self._error("expected an object", field=key)
        self._check_fields(section, allowed, key)
        return section

    def _number(self, value: Any, field: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._error(f"expected a number, got {value!r}", field=field)
        return float(value)

    def _integer(self, value: Any, field: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self._error(f"expected an integer, got {value!r}", field=field)
        return value

    def _vector(self, value: Any, field: str) -> List[float]:
        if not isinstance(value, list) or not value:
            raise self._error("expected a non-empty list of numbers", field=field)
        return [self._number(v, f"{field}[{k}]") for k, v in enumerate(value)]

    def _kind(self, value: Any, allowed, field: str) -> str:
        if value not in allowed:
            raise self._error(f"expected one of {', '.join(allowed)}, got {value!r}", field=field)
        return value

    def parse(self, document: Dict[str, Any]) -> Scenario:
        self._check_fields(document, TOP_LEVEL_FIELDS, '')
        for required in ('dim', 'receivers'):
            if required not in document:
                raise self._error("missing required field", field=required)

        dim = self._integer(document['dim'], 'dim')
        if not isinstance(document['receivers'], list):
            raise self._error("expected a list of receivers", field='receivers')

        receivers = []
        for k, item in enumerate(document['receivers']):
            name = f"receivers[{k}]"
            if not isinstance(item, dict):
                raise self._error("expected an object", field=name)
            self._check_fields(item, RECEIVER_FIELDS, name)
            for required in ('position', 'velocity'):
                if required not in item:
                    raise self._error("missing required field", field=f"{name}.{required}")
            receivers.append(Receiver(self._vector(item['position'], f"{name}.position"),
                                      self._vector(item['velocity'], f"{name}.velocity")))

        emitter = None
        section = self._section(document, 'emitter', EMITTER_FIELDS)
        if section is not None:
            if 'position' not in section:
                raise self._error("missing required field", field='emitter.position')
            emitter = Emitter(self._vector(section['position'], 'emitter.position'))

        return Scenario(
            dim=dim,
            receivers=tuple(receivers),
            emitter=emitter,
            pairing=self._parse_pairing(self._section(document, 'pairing', PAIRING_FIELDS)),
            noise=self._parse_noise(self._section(document, 'noise', NOISE_FIELDS)),
            units=self._parse_units(self._section(document, 'units', UNITS_FIELDS)),
        )

    def _parse_pairing(self, section: Optional[Dict[str, Any]]) -> PairingScheme:
        if section is None:
            return PairingScheme.reference(0)
        kind = self._kind(section.get('kind', 'reference'), PAIRING_KINDS, 'pairing.kind')
        if kind == 'reference':
            ref_index = self._integer(section.get('ref_index', 1), 'pairing.ref_index')
            return PairingScheme.reference(ref_index - 1)
        if kind == 'all_pairs':
            return PairingScheme.all_pairs()

        if 'pairs' not in section:
            raise self._error("missing required field", field='pairing.pairs')
        if not isinstance(section['pairs'], list):
            raise self._error("expected a list of [i, j] pairs", field='pairing.pairs')
        pairs = []
        for k, pair in enumerate(section['pairs']):
            field = f"pairing.pairs[{k}]"
            if not isinstance(pair, list) or len(pair) != 2:
                raise self._error("expected a pair [i, j]", field=field)
            i, j = (self._integer(v, field) for v in pair)
            pairs.append((i - 1, j - 1))
        return PairingScheme.explicit(pairs)

    def _parse_noise(self, section: Optional[Dict[str, Any]]) -> NoiseModel:
        if section is None:
            return NoiseModel()
        default_kind = 'differenced' if 'sigma' in section else 'none'
        kind = self._kind(section.get('kind', default_kind), NOISE_KINDS, 'noise.kind')
        sigma = self._number(section.get('sigma', 0.0), 'noise.sigma')
        seed = self._integer(section.get('seed', 0), 'noise.seed')
        covariance = None
        if 'Q' in section:
            if not isinstance(section['Q'], list):
                raise self._error("expected a list of rows", field='noise.Q')
            covariance = tuple(tuple(self._vector(row, f"noise.Q[{k}]")) for k, row in enumerate(section['Q']))
        return NoiseModel(kind=kind, sigma=sigma, covariance=covariance, seed=seed)

    def _parse_units(self, section: Optional[Dict[str, Any]]) -> UnitConvention:
        if section is None:
            return UnitConvention()
        mode = self._kind(section.get('mode', 'scaled'), UNIT_MODES, 'units.mode')
        f0 = self._number(section['f0'], 'units.f0') if 'f0' in section else None
        c = self._number(section['c'], 'units.c') if 'c' in section else None
        return UnitConvention(mode=mode, f0=f0, c=c)

    def read(self) -> Scenario:
        return self.parse(self.read_document())


def scenario_to_document(scenario: Scenario) -> Dict[str, Any]:
    document: Dict[str, Any] = {
        'dim': scenario.dim,
        'receivers': [
            {'position': list(r.position), 'velocity': list(r.velocity)} for r in scenario.receivers
        ],
    }
    if scenario.emitter is not None:
        document['emitter'] = {'position': list(scenario.emitter.position)}

    pairing = scenario.pairing
    document['pairing'] = {'kind': pairing.kind}
    if pairing.kind == 'reference':
        document['pairing']['ref_index'] = pairing.ref_index + 1
    elif pairing.kind == 'explicit':
        document['pairing']['pairs'] = [[i + 1, j + 1] for i, j in pairing.pairs]

    noise = scenario.noise
    document['noise'] = {'kind': noise.kind, 'sigma': noise.sigma, 'seed': noise.seed}
    if noise.covariance is not None:
        document['noise']['Q'] = [list(row) for row in noise.covariance]

    units = scenario.units
    document['units'] = {'mode': units.mode}
    if units.f0 is not None:
        document['units']['f0'] = units.f0
    if units.c is not None:
        document['units']['c'] = units.c
    return document


def load_scenario(path) -> Scenario:
    path = Path(path)
    logger.info(f"Loading scenario from {path}")
    scenario = ScenarioReader(path).read()
    logger.debug(f"Loaded {scenario.n_receivers} receivers in {scenario.dim}D")
    return scenario


def save_scenario(scenario: Scenario, path):
    path = Path(path)
    document = scenario_to_document(scenario)
    for value in _walk_numbers(document):
        if not math.isfinite(value):
            raise ScenarioFormatError("cannot save non-finite values", path=path)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        if path.suffix.lower() in YAML_SUFFIXES:
            yaml.safe_dump(document, f, sort_keys=False, default_flow_style=None)
        else:
            json.dump(document, f, indent=2)
            f.write('\n')
    logger.info(f"Scenario written to {path}")


def _walk_numbers(node):
    if isinstance(node, dict):
        for value in node.values():
            yield from _walk_numbers(value)
    elif isinstance(node, list):
        for value in node:
            yield from _walk_numbers(value)
    elif isinstance(node, float):
        yield node
