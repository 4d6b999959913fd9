"""
Command-line handler for the honeycomb Dirac toolkit.

Subcommands:
- bands - Band diagram along a high-symmetry path
- dirac - Dirac point at K: omega_D, C_D, theta_sharp, beta1/beta2, conical fit
- gap-sweep - Local gap of W + delta V against delta
- low-contrast - Low-contrast validation against first-order values
- evolve - Envelope evolution along a domain wall
- solve-mode - Stationary line modes / lumps with continuation in mu
- compare - Maxwell wave packet against the envelope prediction
- render - Grayscale PNG of an HNY1 dump

Usage: python src/handler.py <subcommand> --config run.ini [--output-dir DIR]
"""
import os
import sys
import uuid
import time
import logging
import asyncio
import argparse
from dataclasses import replace
from typing import Any, Dict, List

# Add src directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from config import Config, NewtonSettings, get_output_dir
from errors import EXIT_CODES, ConfigError, NumericalError, categorize

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

SUBCOMMANDS = ("bands", "dirac", "gap-sweep", "low-contrast", "evolve", "solve-mode", "compare", "render")

# Initialize services lazily; the Bloch and Maxwell stacks import scipy
_services = {}


def get_service(name: str, **kwargs):
    """Lazy load services; discretization-dependent ones are keyed by their settings."""
    key = (name, tuple(sorted(kwargs.items())))
    if key not in _services:
        if name == 'band':
            from services.bloch_service import BandService
            _services[key] = BandService(**kwargs)
        elif name == 'dirac':
            from services.dirac_service import DiracService
            _services[key] = DiracService(**kwargs)
        elif name == 'envelope':
            from services.envelope_service import EnvelopeService
            _services[key] = EnvelopeService()
        elif name == 'modes':
            from services.modes_service import ModeService
            _services[key] = ModeService(**kwargs)
        elif name == 'maxwell':
            from services.maxwell_service import MaxwellService
            _services[key] = MaxwellService()
        elif name == 'storage':
            from services.storage_service import StorageService
            _services[key] = StorageService()
        else:
            raise KeyError(f"Unknown service: {name}")
    return _services[key]


# ============================================================================
# BUILDERS
# ============================================================================
def build_weight(spec):
    from models.schemas import parse_A_terms, parse_a_terms
    from services import material_service as material

    if spec.kind == "example":
        return material.build_example_weight()
    if spec.kind == "identity":
        return material.identity_weight()
    if spec.kind == "low_contrast":
        return material.low_contrast_weight(material.h_weight(), spec.epsilon)
    return material.fourier_series_weight(parse_A_terms(spec.A_terms), parse_a_terms(spec.a_terms))


def build_perturbation(spec):
    from services import material_service as material

    if spec.kind == "example":
        return material.build_example_perturbation()
    return material.zero_perturbation()


def certified_weight(config):
    """Build the weight and refuse to continue if it is not a honeycomb weight."""
    from services.material_service import check_honeycomb

    weight = build_weight(config.weight)
    certificate = check_honeycomb(weight)
    if not certificate.is_honeycomb:
        raise ConfigError(f"Weight '{weight.name}' is not a honeycomb weight: {certificate.failures()}")
    return weight, certificate


def dirac_service(config):
    d = config.discretization
    return get_service('dirac', truncation=d.truncation, quadrature=d.quadrature, bands=config.dirac.bands)


async def analyze_dirac(config, fit: bool):
    weight, certificate = certified_weight(config)
    perturbation = build_perturbation(config.perturbation)
    data = await dirac_service(config).analyze(
        weight,
        perturbation if config.perturbation.kind != "none" else None,
        radii=config.dirac.radii,
        directions=config.dirac.directions,
        fit=fit,
        phase=config.dirac.phase,
    )
    return weight, perturbation, certificate, data


async def resolve_coefficients(config, section) -> Dict[str, Any]:
    """p1, p2 from the section, or from the Dirac point of the configured weight."""
    if section.p1 is not None and section.p2 is not None:
        return {"p1": section.p1, "p2": section.p2, "source": "config"}
    _, _, _, data = await analyze_dirac(config, fit=False)
    p1, p2 = data.envelope_coefficients(config.dirac.rho)
    return {"p1": p1, "p2": p2, "source": "dirac", "rho": config.dirac.rho}


def build_envelope_mass(section, grid, orientation: str = None):
    from services.envelope_service import build_mass

    return build_mass(
        section.mass,
        grid,
        amplitude=section.amplitude,
        steepness=section.steepness,
        orientation=orientation or section.orientation,
        preset=section.preset,
        radius=section.radius,
        vertices=section.vertices,
        offset=section.offset,
    )


# ============================================================================
# BANDS
# ============================================================================
async def handle_bands(config, output_dir: str) -> dict:
    """Band diagram along a path of high-symmetry points, or a band surface over a square k-grid."""
    from services.bloch_service import rectangular_k_grid
    from services.dump_service import write_csv
    from services.lattice_service import build_hex_lattice, high_symmetry_path

    start_time = time.time()
    section = config.bands
    d = config.discretization
    weight = build_weight(config.weight)
    if section.mode == "surface":
        k_points = rectangular_k_grid(section.extent, section.points)
    else:
        k_points = high_symmetry_path(build_hex_lattice(), section.path, section.points_per_segment)

    band_service = get_service('band', truncation=d.truncation, quadrature=d.quadrature, shape=d.shape)
    table = await band_service.band_surface_sweep(weight, k_points, section.count)

    csv_path = write_csv(os.path.join(output_dir, "bands.csv"), ["kx", "ky", "band_index", "omega"], table.rows())
    return {
        "status": "success",
        "message": f"Solved {section.count} bands at {len(k_points)} k-points",
        "weight": weight.name,
        "mode": section.mode,
        "points": len(k_points),
        "ambiguous": {str(k): v for k, v in table.ambiguous.items()},
        "artifacts": [csv_path],
        "processing_time": time.time() - start_time
    }


# ============================================================================
# DIRAC POINT
# ============================================================================
async def handle_dirac(config, output_dir: str) -> dict:
    """Dirac point at K with its effective coefficients."""
    from services.bloch_service import synthesize_periodic_part
    from services.dump_service import write_dump, write_json

    start_time = time.time()
    weight, perturbation, certificate, data = await analyze_dirac(config, fit=config.dirac.fit)

    artifacts = [write_json(os.path.join(output_dir, "dirac.json"), data.to_dict())]
    for name, psi in (("psi1", data.psi1), ("psi2", data.psi2)):
        periodic = np.moveaxis(synthesize_periodic_part(psi), -1, 0)
        artifacts.append(write_dump(os.path.join(output_dir, f"{name}.hny"), periodic, "maxwell"))

    return {
        "status": "success",
        "message": f"Dirac point at omega_D = {data.omega_d:.8f}",
        "certificate": certificate.model_dump(),
        "dirac": data.to_dict(),
        "artifacts": artifacts,
        "processing_time": time.time() - start_time
    }


# ============================================================================
# GAP SWEEP
# ============================================================================
async def handle_gap_sweep(config, output_dir: str) -> dict:
    """Gap opened at K by W + delta V."""
    from services.dump_service import write_csv

    start_time = time.time()
    if config.perturbation.kind == "none":
        raise ConfigError("gap-sweep needs a perturbation")
    weight, perturbation, _, data = await analyze_dirac(config, fit=False)
    sweep = await dirac_service(config).gap_sweep(
        weight, perturbation, config.gap_sweep.deltas, band=data.band, theta_sharp=data.theta_sharp
    )
    csv_path = write_csv(os.path.join(output_dir, "gap_sweep.csv"), ["delta", "gap"], sweep["rows"])
    return {
        "status": "success",
        "message": f"Gap sweep over {len(config.gap_sweep.deltas)} deltas",
        "theta_sharp": data.theta_sharp,
        "sweep": sweep,
        "artifacts": [csv_path],
        "processing_time": time.time() - start_time
    }


# ============================================================================
# LOW CONTRAST
# ============================================================================
async def handle_low_contrast(config, output_dir: str) -> dict:
    """Numerical Dirac data of I + eps h I against first-order perturbation values."""
    from services.dump_service import write_csv
    from services.material_service import h_weight

    start_time = time.time()
    report = await dirac_service(config).low_contrast_validate(h_weight(), config.low_contrast.epsilons)
    header = ["epsilon", "omega_pair", "predicted_pair", "pair_error", "omega_simple", "predicted_simple", "simple_error", "cd"]
    rows = [[p[key] for key in header] for p in report["points"]]
    csv_path = write_csv(os.path.join(output_dir, "low_contrast.csv"), header, rows)
    return {
        "status": "success",
        "message": f"Low-contrast validation over {len(rows)} epsilons",
        "report": report,
        "artifacts": [csv_path],
        "processing_time": time.time() - start_time
    }


# ============================================================================
# ENVELOPE EVOLUTION
# ============================================================================
def initial_envelope(config, grid, mass, coefficients: Dict[str, Any]):
    from services import envelope_service as envelope
    from services.modes_service import line_grid

    section = config.evolve
    if section.initial == "edge_packet":
        along = section.center[0] if section.orientation == "horizontal" else section.center[1]
        return envelope.edge_packet(mass, along, section.width)
    if section.initial == "line_mode":
        return envelope.linear_line_mode(grid, section.xi, envelope.gaussian(section.width, section.center[0]))
    if section.initial == "curved_edge":
        return envelope.curved_edge_initial(grid, section.center, section.amplitude, section.steepness, mass)

    line_mass = build_envelope_mass(section, line_grid(section.lx2, section.n2), orientation="horizontal")
    mode = get_service('modes').solve_line_mode(section.mu, coefficients["p1"], coefficients["p2"], line_mass)
    return envelope.modulated_line_mode(mode.chi, grid, section.width, section.center[0])


async def handle_evolve(config, output_dir: str) -> dict:
    """Envelope evolution with observables, dumps and a final energy image."""
    from services.dump_service import write_csv, write_dump
    from services.envelope_service import EnvelopeGrid
    from services.render_service import render_scalar_field

    start_time = time.time()
    section = config.evolve
    grid = EnvelopeGrid(lx1=section.lx1, lx2=section.lx2, n1=section.n1, n2=section.n2)
    mass = build_envelope_mass(section, grid)
    coefficients = {"p1": 0.0, "p2": 0.0, "source": "linear"}
    if not section.linear_only:
        coefficients = await resolve_coefficients(config, section)

    state = initial_envelope(config, grid, mass, coefficients)
    if section.noise > 0:
        rng = np.random.default_rng(config.run.seed)
        scale = section.noise * float(np.max(np.abs(state.alpha)))
        noise = rng.standard_normal(state.alpha.shape) + 1j * rng.standard_normal(state.alpha.shape)
        state = replace(state, alpha=state.alpha + scale * noise)
    state = replace(state, p1=coefficients["p1"], p2=coefficients["p2"])

    artifacts: List[str] = [write_dump(os.path.join(output_dir, "alpha_initial.hny"), state.alpha, "spinor")]
    steps = int(round(section.final_time / section.dt))
    try:
        trajectory = await asyncio.to_thread(
            get_service('envelope').evolve,
            state,
            mass,
            section.dt,
            steps,
            section.linear_only,
            section.cadence,
            section.snapshot_cadence,
            section.tube_half_width,
        )
    except NumericalError as e:
        last = getattr(e, "last_state", None)
        if last is not None:
            write_dump(os.path.join(output_dir, "alpha_last_stable.hny"), last.alpha, "spinor")
        raise

    artifacts.append(write_csv(
        os.path.join(output_dir, "observables.csv"), ["T", "norm", "cx", "cy", "edge_fraction"], trajectory.rows()
    ))
    for snapshot in trajectory.snapshots:
        artifacts.append(write_dump(os.path.join(output_dir, f"alpha_T{snapshot.time:.4f}.hny"), snapshot.alpha, "spinor"))
    artifacts.append(write_dump(os.path.join(output_dir, "alpha_final.hny"), trajectory.final.alpha, "spinor"))
    artifacts.append(render_scalar_field(
        np.sqrt(trajectory.final.energy_density), os.path.join(output_dir, "alpha_final.png")
    ))

    first, last = trajectory.observables[0], trajectory.observables[-1]
    return {
        "status": "success",
        "message": f"Evolved {steps} steps to T = {trajectory.final.time:.4f}",
        "coefficients": coefficients,
        "seed": config.run.seed,
        "norm_drift": abs(last.norm - first.norm) / first.norm if first.norm > 0 else 0.0,
        "edge_fraction": [first.edge_fraction, last.edge_fraction],
        "center": [first.center, last.center],
        "artifacts": artifacts,
        "processing_time": time.time() - start_time
    }


# ============================================================================
# STATIONARY MODES
# ============================================================================
async def handle_solve_mode(config, output_dir: str) -> dict:
    """Line modes or lumps along a mu list, each seeded by the previous one."""
    from services.dump_service import write_csv, write_dump, write_json
    from services.envelope_service import EnvelopeGrid
    from services.modes_service import ModeService, line_grid

    start_time = time.time()
    section = config.solve_mode
    coefficients = await resolve_coefficients(config, section)
    lump = section.mode == "lump"
    if lump:
        grid = EnvelopeGrid(lx1=section.lx1, lx2=section.lx2, n1=section.n1, n2=section.n2)
        mass = build_envelope_mass(section, grid)
    else:
        mass = build_envelope_mass(section, line_grid(section.lx2, section.n2), orientation="horizontal")

    settings = NewtonSettings(
        tolerance=section.tolerance,
        max_iterations=section.max_iterations,
        cg_tolerance=section.cg_tolerance,
        preconditioner_shift=section.preconditioner_shift,
    )
    service = ModeService(settings)
    sweep = await asyncio.to_thread(
        service.continuation_sweep, section.mus, coefficients["p1"], coefficients["p2"], mass, lump
    )

    artifacts = []
    for i, mode in enumerate(sweep["modes"]):
        artifacts.append(write_dump(os.path.join(output_dir, f"mode_{i:03d}.hny"), mode.chi, "spinor"))
        artifacts.append(write_json(os.path.join(output_dir, f"mode_{i:03d}.json"), mode.sidecar()))
    artifacts.append(write_csv(os.path.join(output_dir, "power_curve.csv"), ["mu", "power"], sweep["power_curve"]))
    return {
        "status": "success",
        "message": f"Solved {len(sweep['modes'])} {section.mode} modes",
        "coefficients": coefficients,
        "newton": settings.to_dict(),
        "modes": [mode.sidecar() for mode in sweep["modes"]],
        "max_power_jump": sweep["max_power_jump"],
        "artifacts": artifacts,
        "processing_time": time.time() - start_time
    }


# ============================================================================
# MAXWELL COMPARISON
# ============================================================================
async def handle_compare(config, output_dir: str) -> dict:
    """Maxwell wave packet on a vertical wall against the envelope prediction."""
    from services.dump_service import write_csv, write_dump
    from services.maxwell_service import ComparisonSetup
    from services.render_service import render_scalar_field

    start_time = time.time()
    weight, perturbation, _, data = await analyze_dirac(config, fit=False)
    setup = ComparisonSetup(**config.compare.model_dump())
    report, maxwell, envelope = await get_service('maxwell').run_comparison(data, weight, perturbation, setup)

    artifacts = [
        write_csv(os.path.join(output_dir, "maxwell_observables.csv"), ["t", "energy", "cx", "cy", "edge_fraction"], maxwell.rows()),
        write_csv(os.path.join(output_dir, "envelope_observables.csv"), ["T", "norm", "cx", "cy", "edge_fraction"], envelope.rows()),
        write_dump(os.path.join(output_dir, "maxwell_final.hny"), maxwell.final.fields, "maxwell"),
        write_dump(os.path.join(output_dir, "envelope_final.hny"), envelope.final.alpha, "spinor"),
        render_scalar_field(
            np.sqrt(np.sum(np.abs(maxwell.final.fields) ** 2, axis=0)), os.path.join(output_dir, "maxwell_final.png")
        ),
    ]
    return {
        "status": "success",
        "message": f"Compared to t = {maxwell.final.time:.4f}",
        "dirac": {"omegaD": data.omega_d, "CD": data.cd, "thetaSharp": data.theta_sharp},
        "setup": setup.to_dict(),
        "report": report.model_dump(),
        "artifacts": artifacts,
        "processing_time": time.time() - start_time
    }


# ============================================================================
# RENDER
# ============================================================================
async def handle_render(config, output_dir: str) -> dict:
    """Grayscale PNG of a dump."""
    from services.dump_service import read_dump
    from services.render_service import dump_scalar, render_scalar_field

    start_time = time.time()
    section = config.render
    if section is None:
        raise ConfigError("render needs a [render] section with an input dump")
    dump = read_dump(section.input)
    path = render_scalar_field(
        dump_scalar(dump, section.quantity, section.component), os.path.join(output_dir, section.output)
    )
    return {
        "status": "success",
        "message": f"Rendered {dump.kind_name} dump",
        "artifacts": [path],
        "processing_time": time.time() - start_time
    }


# ============================================================================
# MAIN HANDLER
# ============================================================================
HANDLERS = {
    "bands": handle_bands,
    "dirac": handle_dirac,
    "gap-sweep": handle_gap_sweep,
    "low-contrast": handle_low_contrast,
    "evolve": handle_evolve,
    "solve-mode": handle_solve_mode,
    "compare": handle_compare,
    "render": handle_render,
}


async def run(subcommand: str, config, output_dir: str = None) -> dict:
    """
    Route a subcommand to its handler.

    Every outcome is a dict with a status; failures carry the error category.
    """
    output_dir = get_output_dir(output_dir or config.run.output_dir)
    logger.info(f"Received subcommand: {subcommand}")

    if subcommand not in HANDLERS:
        return {"status": "error", "category": "CONFIG", "error": f"Unknown subcommand: {subcommand}"}

    try:
        result = await HANDLERS[subcommand](config, output_dir)
    except Exception as e:
        category = categorize(e)
        logger.error(f"Error in {subcommand}: {e}", exc_info=category == "INTERNAL")
        result = {"status": "error", "category": category, "error": str(e)}
        detail = getattr(e, "detail", None)
        if detail:
            result["detail"] = detail

    result["subcommand"] = subcommand
    result["output_dir"] = output_dir

    storage = get_service('storage')
    if result["status"] == "success" and storage.enabled and config.run.upload:
        run_id = f"{config.run.label}-{subcommand}-{uuid.uuid4().hex[:8]}"
        result["urls"] = await storage.upload_artifacts(result.get("artifacts", []), run_id)
    return result


def exit_code(result: dict) -> int:
    if result.get("status") == "success":
        return 0
    return EXIT_CODES.get(result.get("category"), 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="honeycomb", description="Maxwell honeycomb Dirac-point toolkit")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="INI run configuration; defaults apply when omitted")
    parser.add_argument("--output-dir", help="Directory for result.json and artifacts")
    return parser


def main(argv=None) -> int:
    from models.schemas import RunConfig, load_config
    from services.dump_service import write_json

    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
    except Exception as e:
        category = categorize(e)
        logger.error(f"Invalid configuration: {e}")
        result = {"status": "error", "category": category, "error": str(e), "subcommand": args.subcommand}
        write_json(os.path.join(get_output_dir(args.output_dir), "result.json"), result)
        return EXIT_CODES.get(category, 1)

    result = asyncio.run(run(args.subcommand, config, args.output_dir))
    write_json(os.path.join(result["output_dir"], "result.json"), result)
    code = exit_code(result)
    logger.info(f"{args.subcommand} finished with status {result['status']} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
