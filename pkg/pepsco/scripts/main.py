"""Extracts conserved operators of PEPS states, verifies them on small tori and exports spectra"""

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas
import scipy.sparse
from tqdm import tqdm

from tn.basis import (
    Momentum,
    OperatorBasis,
    PauliSum,
    SupportGeometry,
    medial_restricted_basis,
    product_basis,
    su2_reduced_plaquette_basis,
    trivial_subspace,
    wegner_dual,
)
from tn.constants import (
    CTM_MAX_ITER,
    CTM_TOL,
    KERNEL_TOL,
    MAX_STATEVECTOR_DIM,
    OUTPUT_ROOT_ENV,
)
from tn.ctmrg import (
    CtmNetwork,
    converge_environment,
)
from tn.exceptions import (
    ConfigError,
    CtmrgDivergenceError,
    MemoryBudgetError,
    PepscoError,
)
from tn.extraction import (
    StructureFactorMatrix,
    aklt_family_membership,
    deflate,
    kernel_dimension,
    solution_from_dict,
    solution_to_dict,
    solve,
    standard_deflation,
)
from tn.genfunc import (
    RowCache,
    chi_scan,
    genfunc_structure_factor,
)
from tn.models import (
    FiniteTorus,
    PepsUnitCell,
    build_aklt_peps,
    build_deformed_tc_state,
    build_ising_peps,
    build_rvb_peps,
    dual_target_term,
    load_peps,
    save_peps,
)
from tn.oracle import (
    build_edge_operator,
    build_global_operator,
    build_pauli_operator,
    commutator_norm,
    contract_torus_statevector,
    exact_structure_factor,
    expectation_and_variance,
    gauge_projector,
    ising_parent_hamiltonian,
    spectrum,
    spectrum_histogram,
)

##### Default Run Configuration #####
CONFIG_PATH = os.path.dirname(__file__) + "/config/default.ini"
"""Configuration file read when no other file is given"""

##### Exit Codes #####
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DEGRADED = 2

MODELS = ("aklt", "rvb", "ising", "file")
BACKENDS = ("oracle", "genfunc")
BASES = ("product", "su2-39", "medial")
VERIFY_CHECKS = ("variance", "global-op", "commutator", "annihilation", "scar-dos", "duality", "aklt-family", "parent")
CHECK_TOL: float = 1e-10
"""Residual below which a verification check passes"""

logger = logging.getLogger(__name__)


##### Run Configuration #####

@dataclass
class RunConfig():
    """ Every setting of one run, filled from the config file and command-line overrides.

        Oracle runs need a torus, generating-function runs an environment
        bond dimension; the finite difference step falls back to the support
        default.
    """

    model: str = "ising"
    beta: float = 0.3
    peps_path: str = ""

    backend: str = "oracle"
    lx: int = 4
    ly: int = 4
    method: str = "auto"
    chi: int = 32
    delta: "float | None" = None
    tol: float = CTM_TOL
    max_iter: int = CTM_MAX_ITER
    workers: int = 1
    cold_check: bool = False
    chi_scan: "list[int]" = field(default_factory=list)

    geometry: str = "plaquette"
    basis: str = "product"
    momentum: str = "0,0"

    trivial: bool = True
    embed: "list[str]" = field(default_factory=list)

    output: str = "output"
    count: int = 4
    xlsx: bool = False

    def validate(self):
        """Raises ConfigError on inconsistent settings"""
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if self.model == "file" and not self.peps_path:
            raise ConfigError("model 'file' needs a PEPS path")
        if self.model == "ising" and not math.isfinite(self.beta):
            raise ConfigError(f"beta must be finite, got {self.beta}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}, expected one of {BACKENDS}")
        if self.backend == "oracle" and (self.lx < 1 or self.ly < 1):
            raise ConfigError("the oracle backend needs a torus")
        if self.backend == "oracle" and self.method not in ("auto", "rdm", "statevector"):
            raise ConfigError(f"unknown oracle method {self.method!r}")
        if self.backend == "genfunc" and self.chi < 1:
            raise ConfigError("the genfunc backend needs a positive chi")
        if self.delta is not None and self.delta <= 0:
            raise ConfigError("the finite difference step must be positive")
        if self.workers < 1 or self.count < 1 or self.max_iter < 1:
            raise ConfigError("workers, count and max_iter must be positive")
        if self.basis not in BASES:
            raise ConfigError(f"unknown basis {self.basis!r}, expected one of {BASES}")
        if self.basis == "su2-39" and self.geometry != "plaquette":
            raise ConfigError("the su2-39 basis lives on the plaquette")
        if self.basis == "medial" and self.geometry != "window_2x3":
            raise ConfigError("the medial basis lives on the window_2x3 geometry")
        for name in self.embed:
            if name not in ("site", "pair") or name == self.geometry:
                raise ConfigError(f"cannot embed {name!r} solutions into the {self.geometry} support")
        if self.chi_scan and self.backend != "genfunc":
            raise ConfigError("chi scans need the genfunc backend")
        try:
            SupportGeometry.from_name(self.geometry, 2)
            Momentum.from_label(self.momentum)
        except PepscoError as exception:
            raise ConfigError(str(exception)) from exception

    @property
    def q(self) -> Momentum:
        """Momentum of the run"""
        return Momentum.from_label(self.momentum)

    @property
    def tag(self) -> str:
        """Model tag used for cache files"""
        if self.model == "ising":
            return f"ising-beta{self.beta:g}"
        if self.model == "file":
            return os.path.splitext(os.path.basename(self.peps_path))[0]
        return self.model

    @property
    def directory(self) -> str:
        """Output directory, placed under the output root when that is set"""
        root = os.environ.get(OUTPUT_ROOT_ENV)
        return os.path.join(root, self.output) if root and not os.path.isabs(self.output) else self.output


_INI_KEYS: "dict[str, tuple[str, str]]" = {
    "model": ("model", "name"), "beta": ("model", "beta"), "peps_path": ("model", "path"),
    "backend": ("backend", "name"), "lx": ("backend", "lx"), "ly": ("backend", "ly"),
    "method": ("backend", "method"), "chi": ("backend", "chi"), "delta": ("backend", "delta"),
    "tol": ("backend", "tol"), "max_iter": ("backend", "max_iter"), "workers": ("backend", "workers"),
    "cold_check": ("backend", "cold_check"), "chi_scan": ("backend", "chi_scan"),
    "geometry": ("basis", "geometry"), "basis": ("basis", "name"), "momentum": ("basis", "momentum"),
    "trivial": ("deflation", "trivial"), "embed": ("deflation", "embed"),
    "output": ("output", "directory"), "count": ("output", "count"), "xlsx": ("output", "xlsx"),
}
"""Config file (section, key) of every RunConfig field"""


def _parse_value(kind: str, text: str):
    """Converts a config file string into the type of a RunConfig field"""
    text = text.strip()
    if kind == "bool":
        if text.lower() not in configparser.ConfigParser.BOOLEAN_STATES:
            raise ValueError(f"not a boolean: {text!r}")
        return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "float | None":
        return float(text) if text else None
    if kind == "list[int]":
        return [int(part) for part in text.split(",") if part.strip()]
    if kind == "list[str]":
        return [part.strip() for part in text.split(",") if part.strip()]
    return text


def load_config(path: str, overrides: "dict | None" = None) -> RunConfig:
    """ Reads a config file and applies command-line overrides.

        Parameters
        ----------
        path : str
            INI file with the sections [model], [backend], [basis], [deflation] and [output]
        overrides : dict, optional
            Field values taking precedence over the file

        Returns
        -------
        RunConfig
            The validated configuration
    """
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="UTF-8"):
        raise ConfigError(f"config file {path} not found")
    values = {}
    for item in fields(RunConfig):
        section, key = _INI_KEYS[item.name]
        if parser.has_option(section, key):
            try:
                values[item.name] = _parse_value(item.type if isinstance(item.type, str) else item.type.__name__, parser.get(section, key))
            except ValueError as exception:
                raise ConfigError(f"[{section}] {key}: {exception}") from exception
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    config = RunConfig(**values)
    config.validate()
    return config


##### Run Building Blocks #####

def build_model(config: RunConfig) -> PepsUnitCell:
    """The configured PEPS"""
    if config.model == "aklt":
        return build_aklt_peps()
    if config.model == "rvb":
        return build_rvb_peps()
    if config.model == "ising":
        return build_ising_peps(config.beta)
    return load_peps(config.peps_path)


def build_basis(config: RunConfig, d: int) -> OperatorBasis:
    """The configured operator basis for physical dimension d"""
    if config.basis == "su2-39":
        return su2_reduced_plaquette_basis()
    if config.basis == "medial":
        return medial_restricted_basis()
    return product_basis(SupportGeometry.from_name(config.geometry, d))


def structure_factor(config: RunConfig, peps: PepsUnitCell, basis: OperatorBasis) -> StructureFactorMatrix:
    """𝒮 from the configured backend"""
    if config.backend == "oracle":
        torus = FiniteTorus(config.lx, config.ly, peps.physical_dim)
        return exact_structure_factor(peps, torus, basis, config.q, method=config.method, progress=True)
    cache = RowCache(os.path.join(config.directory, "cache"), config.tag)
    matrix, _ = genfunc_structure_factor(
        peps, basis, config.q, config.chi, config.delta, config.tol, config.max_iter,
        workers=config.workers, cache=cache, cold_check=config.cold_check, progress=True,
    )
    return matrix


def kernel_tolerance(config: RunConfig, geometry: str) -> float:
    """Kernel threshold of a support for the configured backend"""
    return KERNEL_TOL["genfunc"] if config.backend == "genfunc" else KERNEL_TOL.get(geometry, KERNEL_TOL["plaquette"])


def smaller_solutions(config: RunConfig, peps: PepsUnitCell, name: str) -> "tuple[OperatorBasis, np.ndarray]":
    """Kernel vectors of a smaller support, to be embedded into the run's support"""
    basis = product_basis(SupportGeometry.from_name(name, peps.physical_dim))
    matrix = structure_factor(config, peps, basis)
    deflated = deflate(matrix, standard_deflation(basis, config.q) if config.trivial else {})
    tol = kernel_tolerance(config, name)
    count = kernel_dimension(deflated.spectrum(), tol)
    solutions = solve(deflated, count) if count else []
    vectors = np.array([sol.coefficients for sol in solutions if sol.eigenvalue < tol]).reshape(-1, len(basis))
    logger.info(f"{len(vectors)} kernel solutions on the {name} support to embed")
    return basis, vectors


##### Output Writers #####

def _plain(value):
    """JSON fallback for numpy values"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not serializable")


def write_json(path: str, payload: dict):
    """Writes sorted-key JSON with repr-exact floats"""
    with open(path, mode="w", encoding="UTF-8") as file:
        json.dump(payload, file, sort_keys=True, indent=2, default=_plain)
        file.write("\n")


def write_table(path: str, frame: pandas.DataFrame, provenance: dict):
    """Writes a CSV table preceded by a provenance comment line"""
    with open(path, mode="w", encoding="UTF-8", newline="") as file:
        file.write(f"# {json.dumps(provenance, sort_keys=True, default=_plain)}\n")
        frame.to_csv(file)


def write_workbook(path: str, sheets: "dict[str, pandas.DataFrame]"):
    """Writes one worksheet per table"""
    writer = pandas.ExcelWriter(path, engine="xlsxwriter")
    for name, frame in sheets.items():
        frame.to_excel(writer, sheet_name=name, freeze_panes=(1, 1))
        sheet = writer.sheets[name]
        sheet.set_column(0, 0, 13)      # Index column width
        for i, col in enumerate(frame.columns):
            sheet.set_column(i + 1, i + 1, len(str(col)) + 7)
    writer.close()


##### Extract Command #####

def cmd_extract(config: RunConfig) -> int:
    """ Builds 𝒮, deflates the known solutions and writes the spectrum and the lowest solutions.

        Returns
        -------
        int
            0, or 2 when an environment did not converge
    """
    directory = config.directory
    peps = build_model(config)
    basis = build_basis(config, peps.physical_dim)
    q = config.q
    logger.info(f"extract: {config.tag}, {basis}, q={q}, backend {config.backend}")

    matrix = structure_factor(config, peps, basis)
    smaller = [smaller_solutions(config, peps, name) for name in config.embed]
    subspaces = standard_deflation(basis, q, smaller)
    if not config.trivial:
        subspaces.pop("trivial")
    deflated = deflate(matrix, subspaces)
    solutions = solve(deflated, config.count)
    deflated_spectrum = deflated.spectrum()
    tol = kernel_tolerance(config, basis.geometry.name)

    ##### Spectrum Table #####
    frame = pandas.DataFrame({
        "eigenvalue": matrix.eigenvalues,
        "deflated": deflated_spectrum,
    })
    frame.index.name = "index"
    write_table(os.path.join(directory, "spectrum.csv"), frame, asdict(config))

    ##### Solution File #####
    write_json(os.path.join(directory, "solutions.json"), {
        "config": asdict(config),
        "provenance": matrix.provenance,
        "quality": matrix.quality(),
        "deflation": deflated.summary(),
        "kernel_dimension": kernel_dimension(deflated_spectrum, tol),
        "kernel_tolerance": tol,
        "spectrum": matrix.eigenvalues,
        "deflated_spectrum": deflated_spectrum,
        "solutions": [solution_to_dict(sol) for sol in solutions],
    })
    sheets = {"spectrum": frame}

    ##### Chi Scan #####
    if config.chi_scan:
        records = chi_scan(
            peps, basis, q, config.chi_scan, config.delta, smaller,
            tol=config.tol, max_iter=config.max_iter, workers=config.workers,
            cache=RowCache(os.path.join(directory, "cache"), config.tag),
        )
        scan = pandas.DataFrame(records).set_index("chi")
        write_table(os.path.join(directory, "chi_scan.csv"), scan, asdict(config))
        sheets["chi_scan"] = scan

    if config.xlsx:
        coefficients = pandas.DataFrame(
            {f"solution {i}": sol.coefficients for i, sol in enumerate(solutions)},
            index=pandas.Index(basis.labels, name="element"),
        )
        sheets["solutions"] = coefficients
        write_workbook(os.path.join(directory, "extract.xlsx"), sheets)

    print(f"  kernel dimension {kernel_dimension(deflated_spectrum, tol)}, lowest eigenvalue {deflated_spectrum[0]:.3e}")
    if matrix.provenance.get("converged", True) is False:
        logging.error(f"{config.tag}: CTMRG did not converge for every row, flags {matrix.provenance.get('flags')}")
        return EXIT_DEGRADED
    return EXIT_OK


##### Verification Checks #####

def _statevector(config: RunConfig, torus: FiniteTorus) -> np.ndarray:
    return contract_torus_statevector(build_model(config), torus)


def check_variance(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """Energy and variance per site of the translated solution in the torus state"""
    operator = build_global_operator(sol.coefficients, sol.basis, torus, sol.momentum)
    energy, variance = expectation_and_variance(operator, _statevector(config, torus))
    same_torus = sol.provenance.get("backend") == "oracle" and sol.provenance.get("torus") == str(torus)
    residual = abs(variance - sol.eigenvalue)
    passed = residual < 1e-9 if same_torus else variance > -CHECK_TOL
    return {"passed": bool(passed), "residual": residual, "energy_per_site": energy, "variance_per_site": variance, "same_torus": same_torus}


def check_global_op(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """Whether the translated solution vanishes or is proportional to the identity"""
    operator = build_global_operator(sol.coefficients, sol.basis, torus, sol.momentum).to_sparse()
    shift = complex(operator.diagonal().mean())
    rest = operator - shift * scipy.sparse.identity(operator.shape[0], format="csr")
    residual = float(abs(rest).max()) if rest.nnz else 0.0
    kind = "nontrivial" if residual >= CHECK_TOL else ("zero" if abs(shift) < CHECK_TOL else "identity")
    return {"passed": kind != "nontrivial", "residual": residual, "kind": kind, "shift": shift.real}


def _zz_bonds() -> PauliSum:
    return PauliSum.from_string([(0, 0), (1, 0)], "ZZ") + PauliSum.from_string([(0, 0), (0, 1)], "ZZ")


def check_commutator(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """Largest element of [H, Σ Z_i Z_j]"""
    operator = build_global_operator(sol.coefficients, sol.basis, torus, sol.momentum)
    residual = commutator_norm(operator, build_pauli_operator(_zz_bonds(), torus))
    return {"passed": residual < CHECK_TOL, "residual": residual}


def check_annihilation(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """‖H|+…+⟩‖"""
    operator = build_global_operator(sol.coefficients, sol.basis, torus, sol.momentum)
    plus = np.ones(operator.dimension) / math.sqrt(operator.dimension)
    residual = float(np.linalg.norm(operator.matvec(plus)))
    return {"passed": residual < CHECK_TOL, "residual": residual}


def check_scar_dos(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """Zero-mode count and spectral reflection symmetry of the translated solution"""
    operator = build_global_operator(sol.coefficients, sol.basis, torus, sol.momentum)
    result = spectrum(operator, "full")
    values = result.eigenvalues
    residual = float(np.max(np.abs(values + values[::-1])))
    return {"passed": residual < CHECK_TOL, "residual": residual, "zero_modes": result.zero_mode_count, "eigenvalues": values}


def check_duality(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """ The dual edge operator annihilates the deformed toric code and matches the dual model term.

        The comparison with the dual model is restricted to the gauge invariant
        sector and allows one overall scale.
    """
    if not sol.momentum.is_zero:
        return {"passed": False, "residual": float('nan'), "reason": "duality needs q = (0, 0)"}
    term = PauliSum.from_vector(sol.basis.product_vector(sol.coefficients), sol.basis.geometry)
    dual = build_edge_operator(wegner_dual(term), torus)
    state = build_deformed_tc_state(config.beta, torus)
    annihilation = float(np.linalg.norm(dual.matvec(state)) / np.linalg.norm(state))

    gauge = scipy.sparse.diags(gauge_projector(torus))
    ours = gauge @ dual.to_sparse() @ gauge
    target = gauge @ build_edge_operator(dual_target_term(), torus).to_sparse() @ gauge
    scale = complex(ours.multiply(target.conj()).sum() / target.multiply(target.conj()).sum())
    difference = ours - scale * target
    agreement = float(abs(difference).max()) if difference.nnz else 0.0
    residual = max(annihilation, agreement)
    return {"passed": residual < CHECK_TOL, "residual": residual, "annihilation": annihilation, "target": agreement, "scale": scale.real}


def check_aklt_family(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """Least-squares membership in the AKLT parent family"""
    trivial = sol.basis.restrict(trivial_subspace(sol.basis.geometry, sol.momentum))
    report = aklt_family_membership(sol, deflation_vectors=trivial)
    return {"passed": report.in_family, "residual": report.residual, "penalty": report.penalty}


def check_parent(sol, config: RunConfig, torus: FiniteTorus) -> dict:
    """The frustration-free parent Hamiltonian annihilates the deformed Ising state and is bounded below by zero"""
    operator = ising_parent_hamiltonian(config.beta, torus)
    state = contract_torus_statevector(build_ising_peps(config.beta), torus)
    residual = float(np.linalg.norm(operator.matvec(state)) / np.linalg.norm(state))
    ground = float(spectrum(operator, "extremal", k=1).eigenvalues[0])
    return {"passed": residual < CHECK_TOL and ground > -CHECK_TOL, "residual": residual, "ground_energy": ground}


CHECKS = {
    "variance": check_variance,
    "global-op": check_global_op,
    "commutator": check_commutator,
    "annihilation": check_annihilation,
    "scar-dos": check_scar_dos,
    "duality": check_duality,
    "aklt-family": check_aklt_family,
    "parent": check_parent,
}


def run_check(arguments: tuple) -> dict:
    """Runs one check, turning failures into a failed result with the traceback"""
    name, sol, config, torus = arguments
    try:
        result = CHECKS[name](sol, config, torus)
    except Exception as exception:
        result = {"passed": False, "residual": float('nan'), "error": f"{type(exception).__name__}: {exception}", "traceback": traceback.format_exc()}
    result["check"] = name
    return result


def cmd_verify(config: RunConfig, solution_path: str, checks: "list[str]", index: int = 0) -> int:
    """ Runs verification checks on one solution of a solution file.

        Returns
        -------
        int
            0 when every check passes, 2 otherwise
    """
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown:
        raise ConfigError(f"unknown checks {unknown}, expected some of {VERIFY_CHECKS}")
    with open(solution_path, "r", encoding="UTF-8") as file:
        data = json.load(file)
    if not data.get("solutions") or index >= len(data["solutions"]):
        raise ConfigError(f"{solution_path} has no solution {index}")
    entry = data["solutions"][index]
    geometry = SupportGeometry.from_name(entry["geometry"], entry["d"])
    basis = {"su2-39": su2_reduced_plaquette_basis, "medial": medial_restricted_basis}.get(entry["basis"], lambda: product_basis(geometry))()
    sol = solution_from_dict(entry, basis)

    torus = FiniteTorus(config.lx, config.ly, geometry.d)
    site_dimension = geometry.d ** torus.num_sites
    edge_dimension = 2 ** torus.num_edges if "duality" in checks else 0
    if max(site_dimension, edge_dimension) > MAX_STATEVECTOR_DIM:
        raise MemoryBudgetError(f"verification torus {torus} exceeds the statevector budget")

    results: "list[dict]" = []
    jobs = [(name, sol, config, torus) for name in checks]
    with tqdm(total=len(jobs)) as bar:
        if config.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                for result in pool.map(run_check, jobs):
                    results.append(result)
                    bar.update(1)
        else:
            for job in jobs:
                results.append(run_check(job))
                bar.update(1)

    for result in results:
        if "traceback" in result:
            logging.error(f"{result['check']} failed to run \n {result.pop('traceback')}")
        print(f"  {result['check']}: {'pass' if result['passed'] else 'FAIL'} (residual {result['residual']:.3e})")

    write_json(os.path.join(config.directory, "verify.json"), {
        "config": asdict(config),
        "solution": solution_path,
        "index": index,
        "torus": [torus.lx, torus.ly],
        "checks": {result.pop("check"): result for result in results},
    })
    return EXIT_OK if all(result["passed"] for result in results) else EXIT_DEGRADED


##### Spectrum Export Command #####

def cmd_spectrum_export(inputs: "list[str]", directory: str, xlsx: bool = False, bins: int = 100) -> int:
    """ Collects spectra from solution and verification files into plotting tables.

        Writes spectra.csv and spectra.json, plus dos.csv when a file holds a
        scar spectrum.
    """
    spectra: "list[dict]" = []
    dos: "list[dict]" = []
    for path in inputs:
        with open(path, "r", encoding="UTF-8") as file:
            data = json.load(file)
        source = os.path.basename(path)
        if "spectrum" in data:
            deflated = data.get("deflated_spectrum", [None] * len(data["spectrum"]))
            for i, (value, after) in enumerate(zip(data["spectrum"], deflated)):
                spectra.append({"source": source, "index": i, "eigenvalue": value, "deflated": after})
        scar = data.get("checks", {}).get("scar-dos", {})
        if "eigenvalues" in scar:
            counts, edges = spectrum_histogram(np.array(scar["eigenvalues"]), bins)
            for count, low, high in zip(counts, edges, edges[1:]):
                dos.append({"source": source, "low": float(low), "high": float(high), "count": int(count)})
        if "spectrum" not in data and "eigenvalues" not in scar:
            logger.warning(f"{path} holds no spectrum")

    provenance = {"inputs": list(inputs), "bins": bins}
    frame = pandas.DataFrame(spectra, columns=["source", "index", "eigenvalue", "deflated"]).set_index(["source", "index"])
    write_table(os.path.join(directory, "spectra.csv"), frame, provenance)
    write_json(os.path.join(directory, "spectra.json"), {"provenance": provenance, "spectra": spectra, "dos": dos})
    sheets = {"spectra": frame}
    if dos:
        histogram = pandas.DataFrame(dos).set_index(["source", "low"])
        write_table(os.path.join(directory, "dos.csv"), histogram, provenance)
        sheets["dos"] = histogram
    if xlsx:
        write_workbook(os.path.join(directory, "spectra.xlsx"), sheets)
    return EXIT_OK


##### Bench Command #####

def cmd_bench(config: RunConfig) -> int:
    """Times the model build, the exact structure factor and one environment convergence"""
    timings = []

    start = time.perf_counter()
    peps = build_model(config)
    timings.append({"step": "model", "seconds": time.perf_counter() - start})

    basis = build_basis(config, peps.physical_dim)
    start = time.perf_counter()
    exact_structure_factor(peps, FiniteTorus(config.lx, config.ly, peps.physical_dim), basis, config.q, method=config.method)
    timings.append({"step": f"oracle {basis.name} {config.lx}x{config.ly}", "seconds": time.perf_counter() - start})

    start = time.perf_counter()
    environment = converge_environment(CtmNetwork(peps), config.chi, config.tol, config.max_iter)
    timings.append({"step": f"ctmrg chi={config.chi} ({environment.report.iterations} sweeps)", "seconds": time.perf_counter() - start})

    frame = pandas.DataFrame(timings).set_index("step")
    write_table(os.path.join(config.directory, "bench.csv"), frame, asdict(config))
    for timing in timings:
        print(f"  {timing['step']}: {timing['seconds']:.3f} s")
    return EXIT_OK


##### Command Line #####

def _torus(text: str) -> "tuple[int, int]":
    try:
        lx, ly = (int(part) for part in text.lower().split("x"))
    except ValueError as exception:
        raise argparse.ArgumentTypeError(f"torus must look like 4x4, got {text!r}") from exception
    return lx, ly


def _ints(text: str) -> "list[int]":
    return [int(part) for part in text.split(",") if part.strip()]


def _names(text: str) -> "list[str]":
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Parser of the four commands with their config overrides"""
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", default=CONFIG_PATH, help="INI configuration file")
    run.add_argument("--model", choices=MODELS)
    run.add_argument("--beta", type=float)
    run.add_argument("--peps", dest="peps_path", help="PEPS container for model 'file'")
    run.add_argument("--backend", choices=BACKENDS)
    run.add_argument("--torus", type=_torus, help="oracle torus such as 4x4")
    run.add_argument("--method", choices=("auto", "rdm", "statevector"))
    run.add_argument("--chi", type=int)
    run.add_argument("--delta", type=float)
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", dest="max_iter", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--geometry", choices=("site", "pair", "plaquette", "window_2x3"))
    run.add_argument("--basis", choices=BASES)
    run.add_argument("--momentum", help="real-phase momentum such as 0,0 or pi,pi")
    run.add_argument("--output", help="output directory")

    parser = argparse.ArgumentParser(prog="pepsco", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    extract = commands.add_parser("extract", parents=[run], help="extract conserved operators")
    extract.add_argument("--count", type=int)
    extract.add_argument("--no-trivial", dest="trivial", action="store_const", const=False)
    extract.add_argument("--embed", type=_names, help="smaller supports whose solutions are deflated, such as site")
    extract.add_argument("--cold-check", dest="cold_check", action="store_const", const=True)
    extract.add_argument("--chi-scan", dest="chi_scan", type=_ints, help="comma separated environment bond dimensions")
    extract.add_argument("--xlsx", action="store_const", const=True)
    extract.add_argument("--save-peps", dest="save_peps", help="write the PEPS container to this path")

    verify = commands.add_parser("verify", parents=[run], help="verify a solution on a small torus")
    verify.add_argument("solution", help="solutions.json written by extract")
    verify.add_argument("--checks", type=_names, default=["variance", "global-op"])
    verify.add_argument("--index", type=int, default=0, help="solution within the file")

    export = commands.add_parser("spectrum-export", help="collect spectra for plotting")
    export.add_argument("inputs", nargs="+")
    export.add_argument("--output", default="output")
    export.add_argument("--xlsx", action="store_true")
    export.add_argument("--bins", type=int, default=100)

    commands.add_parser("bench", parents=[run], help="time the main building blocks")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    """RunConfig values given on the command line"""
    names = {item.name for item in fields(RunConfig)}
    overrides = {key: value for key, value in vars(args).items() if key in names}
    if getattr(args, "torus", None):
        overrides["lx"], overrides["ly"] = args.torus
    return overrides


def _start_log(directory: str):
    """Creates the output directory and truncates its run log"""
    os.makedirs(directory, exist_ok=True)
    log_path = os.path.join(directory, "main.log")
    with open(log_path, mode="w", encoding="UTF-8") as file:
        file.truncate(0)
    logging.basicConfig(format='%(message)s', filename=log_path, level=logging.INFO, force=True)


def main(argv: "list[str] | None" = None) -> int:
    """ Runs one command.

        Returns
        -------
        int
            0 on success, 1 on configuration errors, 2 on degraded numerical quality
    """
    args = build_parser().parse_args(argv)
    try:
        if args.command == "spectrum-export":
            root = os.environ.get(OUTPUT_ROOT_ENV)
            directory = os.path.join(root, args.output) if root and not os.path.isabs(args.output) else args.output
            _start_log(directory)
            return cmd_spectrum_export(args.inputs, directory, args.xlsx, args.bins)

        config = load_config(args.config, _overrides(args))
        _start_log(config.directory)
        logging.info(f"pepsco {args.command}: {json.dumps(asdict(config), sort_keys=True)}")
        if args.command == "extract":
            if args.save_peps:
                save_peps(build_model(config), args.save_peps)
            return cmd_extract(config)
        if args.command == "verify":
            return cmd_verify(config, args.solution, args.checks, args.index)
        return cmd_bench(config)
    except (ConfigError, MemoryBudgetError) as exception:
        print(f"  configuration error: {exception}", file=sys.stderr)
        logging.error(f"configuration error: {exception} \n {traceback.format_exc()}")
        return EXIT_CONFIG
    except CtmrgDivergenceError as exception:
        print(f"  CTMRG diverged: {exception}", file=sys.stderr)
        logging.error(f"CTMRG diverged \n {traceback.format_exc()}")
        return EXIT_DEGRADED


if __name__ == "__main__":
    sys.exit(main())
