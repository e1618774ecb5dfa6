"""
Command Line Interface Module.

This module provides the CLI for sdf-param using Typer: dataset generation,
training, domain fitting, mesh/metric/texture export, rendering with
texture, shading and domain edits, and evaluation.
"""

from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import imageio.v2 as imageio
import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .checkpoint import CHECKPOINT_FORMAT_VERSION
from .config import RunConfig, dump_run_config, load_run_config
from .dataset import (
    MultiViewDataset,
    generate_synthetic_dataset,
    light_from_dict,
    load_dataset,
    read_cameras,
    to_uint8,
)
from .deformation import surface_samples_from_field
from .domain_fit import fit_domain
from .exceptions import (
    AtlasMismatchError,
    ConfigError,
    DomainFitError,
    FormatError,
    NumericalAbortError,
)
from .mesh_ops import (
    chamfer_distance,
    distortion_report,
    map_mesh,
    marching_cubes,
    sample_surface_points,
    save_obj,
)
from .model import ParamModel, build_param_model, load_domain, load_model, save_domain, swap_domain
from .rendering import PSNR_SENTINEL, Camera, psnr, render_image
from .sdf_fields import MeanSdf, SdfField, field_from_descriptor
from .texture import atlas_kind_for, assign_uv, bake_texture, load_atlas, save_atlas
from .training import (
    CHECKPOINT_DIR,
    GeometrySupervision,
    ImageSupervision,
    TrainingReport,
    train_parameterization,
    two_phase_train,
)
from .utils import set_threads, setup_logging, write_yaml

# Create Typer app
app = typer.Typer(
    name="sdf-param",
    help="Neural parameterization of implicit surfaces onto sphere and polycube domains",
    add_completion=False,
)

console = Console()

EXPORT_KINDS = ("mesh", "domain-mesh", "metrics", "texture")
CD_SAMPLES = 10_000


@dataclass
class CliState:
    """Global options shared by every command."""

    config_path: Optional[Path] = None
    preset: Optional[str] = None

    def load(self) -> RunConfig:
        return load_run_config(self.config_path, self.preset)


_state = CliState()


@contextmanager
def handle_errors() -> Iterator[None]:
    """Print a red diagnostic and exit with the stable code for each error class."""
    try:
        yield
    except NumericalAbortError as e:
        console.print(f"[red]❌ Numerical abort: {e}[/]")
        if e.checkpoint:
            console.print(f"[dim]Last good checkpoint: {e.checkpoint}[/]")
        raise typer.Exit(2)
    except (FormatError, OSError) as e:
        console.print(f"[red]❌ I/O error: {e}[/]")
        raise typer.Exit(3)
    except (ConfigError, AtlasMismatchError, ValueError) as e:
        console.print(f"[red]❌ {e}[/]")
        raise typer.Exit(1)


def _version_callback(value: bool) -> None:
    if value:
        console.print(f"sdf-param {__version__} (checkpoint format {CHECKPOINT_FORMAT_VERSION})")
        raise typer.Exit()


@app.callback()
def main_options(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Run configuration file"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Preset name: desk or full"),
    threads: Optional[int] = typer.Option(
        None, "--threads", "-t", help="Torch threads (default: all cores; 1 is deterministic)"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug-level logs"),
    version: bool = typer.Option(
        False,
        "--version",
        callback=_version_callback,
        is_eager=True,
        help="Print the version and checkpoint format version",
    ),
):
    """Global options."""
    setup_logging(verbose)
    set_threads(threads)
    _state.config_path = config
    _state.preset = preset


def _parse_triple(text: str, name: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        values = []
    if len(values) != 3:
        raise ConfigError(f"{name} must be three comma-separated numbers, got '{text}'")
    return values


def _parse_indices(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"View list must be comma-separated integers, got '{text}'") from e


def _scene_field(cfg: RunConfig, object_id: str) -> SdfField:
    obj = cfg.object(object_id)
    if obj.shape is None:
        raise ConfigError(f"Object '{object_id}' has no analytic shape")
    return field_from_descriptor(obj.shape, Path.cwd())


def _targets(cfg: RunConfig) -> Dict[str, SdfField]:
    return {oid: _scene_field(cfg, oid) for oid in cfg.object_ids()}


def _training_datasets(cfg: RunConfig) -> Dict[str, MultiViewDataset]:
    datasets = {}
    for oid in cfg.object_ids():
        data = load_dataset(cfg.dataset_dir(oid), verify=True)
        data.object_id = oid
        train, _ = data.split(cfg.scene.heldout)
        datasets[oid] = train
    return datasets


def _fit_scene_domain(cfg: RunConfig, targets: Dict[str, SdfField], out_dir: Path) -> SdfField:
    fields = [targets[oid] for oid in sorted(targets)]
    target = fields[0] if len(fields) == 1 else MeanSdf(fields)
    domain, report = fit_domain(target, cfg.domain.to_spec())
    report.save(out_dir / "domain_fit.yaml")
    if not report.converged:
        raise DomainFitError(
            f"Domain fit did not converge (l_sdf={report.final_l_sdf:.4g}); "
            f"report written to {out_dir / 'domain_fit.yaml'}"
        )
    return domain


def _print_report(report: TrainingReport) -> None:
    if not report.trace:
        return
    last = report.trace[-1]
    table = Table(title=f"Training ({report.mode}), epoch {last['epoch'] + 1}", header_style="bold cyan")
    table.add_column("Term", style="bold")
    table.add_column("Final", justify="right")
    table.add_column("Coefficient", justify="right")
    for name, value in last.items():
        if name in ("epoch", "lr"):
            continue
        coeff = report.coefficients.get(name)
        table.add_row(name, f"{value:.6g}", "" if coeff is None else f"{coeff:g}")
    console.print(table)


def _checkpoint_dir(cfg: RunConfig, checkpoint: Optional[Path]) -> Path:
    return checkpoint if checkpoint is not None else cfg.output_dir / CHECKPOINT_DIR


def _pick_object(bundle: ParamModel, object_id: Optional[str]) -> List[str]:
    if object_id is None:
        return bundle.object_ids
    return [bundle.check_object(object_id)]


@app.command("gen-data")
def gen_data(
    object_id: Optional[str] = typer.Option(None, "--object", "-o", help="Only this object"),
):
    """Render synthetic multi-view datasets for the analytic objects of the scene."""
    with handle_errors():
        cfg = _state.load()
        scene = cfg.scene
        table = Table(title="Synthetic datasets", header_style="bold cyan")
        table.add_column("Object", style="bold")
        table.add_column("Views", justify="right")
        table.add_column("Directory")
        for i, obj in enumerate(scene.objects):
            if object_id is not None and obj.id != object_id:
                continue
            if obj.shape is None:
                console.print(f"[yellow]⚠ Skipping '{obj.id}': no analytic shape[/]")
                continue
            out_dir = cfg.dataset_dir(obj.id)
            with console.status(f"[bold green]Rendering {obj.id}...[/]"):
                data = generate_synthetic_dataset(
                    field_from_descriptor(obj.shape, Path.cwd()),
                    obj.albedo,
                    [light_from_dict(light.model_dump()) for light in scene.lights],
                    n_views=scene.n_views,
                    resolution=scene.resolution,
                    seed=scene.seed + i,
                    out_dir=out_dir,
                    ambient=scene.ambient,
                    lights_follow_camera=scene.lights_follow_camera,
                    background=cfg.render.background,
                    radius=scene.camera_radius,
                    object_id=obj.id,
                )
            table.add_row(obj.id, str(len(data)), str(out_dir))
        console.print(table)


@app.command("fit-domain")
def fit_domain_cmd(
    out: Optional[Path] = typer.Option(None, "--out", help="Domain file (default: <output>/domain.yaml)"),
):
    """Fit the parametric domain to the analytic objects of the scene."""
    with handle_errors():
        cfg = _state.load()
        out_dir = cfg.output_dir
        with console.status("[bold green]Fitting domain...[/]"):
            domain = _fit_scene_domain(cfg, _targets(cfg), out_dir)
        path = save_domain(domain, out or out_dir / "domain.yaml")
        console.print(f"[green]✓ Domain ({domain.kind}) written to {path}[/]")


@app.command()
def train(
    resume: bool = typer.Option(False, "--resume", help="Continue from the last checkpoint"),
):
    """Train the parameterization (geometry or image supervision, per config)."""
    with handle_errors():
        cfg = _state.load()
        out_dir = cfg.output_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(cfg, out_dir / "config.yaml")
        options = cfg.train.to_options()
        settings = cfg.render.to_settings()
        images = cfg.train.mode == "images"
        supervision = (
            ImageSupervision(_training_datasets(cfg), settings)
            if images
            else GeometrySupervision(_targets(cfg))
        )

        if resume:
            loaded = load_model(out_dir / CHECKPOINT_DIR)
            report = train_parameterization(
                loaded.bundle, supervision, options, out_dir, resume=loaded.checkpoint
            )
        elif images and cfg.domain.file is None:
            with console.status("[bold green]Training (coarse, domain fit, parameterization)...[/]"):
                bundle, report = two_phase_train(
                    supervision.datasets,
                    cfg.domain.to_spec(),
                    options,
                    settings,
                    cfg.train.deform_config(),
                    cfg.train.appearance_config(),
                    out_dir,
                    cfg.to_dict(),
                )
            save_domain(bundle.domain, out_dir / "domain.yaml")
        else:
            if cfg.domain.file is not None:
                domain = load_domain(cfg.domain.file)
            else:
                domain = _fit_scene_domain(cfg, supervision.targets, out_dir)
            save_domain(domain, out_dir / "domain.yaml")
            bundle = build_param_model(
                domain,
                cfg.object_ids(),
                cfg.train.deform_config(),
                cfg.train.appearance_config(),
                with_appearance=images,
                seed=cfg.train.seed,
                config=cfg.to_dict(),
            )
            with console.status(f"[bold green]Training ({cfg.train.mode})...[/]"):
                report = train_parameterization(bundle, supervision, options, out_dir)

        _print_report(report)
        console.print(f"[green]✓ Checkpoint written to {report.checkpoint}[/]")


@app.command()
def export(
    what: str = typer.Argument(..., help="mesh, domain-mesh, metrics or texture"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint directory"),
    object_id: Optional[str] = typer.Option(None, "--object", "-o", help="Only this object"),
    resolution: int = typer.Option(64, "--resolution", "-r", help="Marching cubes resolution"),
    width: int = typer.Option(256, "--width", help="Texture chart width (power of two)"),
    supersampling: int = typer.Option(2, "--supersampling", help="Texture bake subsamples per axis"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory (default: <output>/export)"),
):
    """Export meshes, distortion metrics or baked texture atlases."""
    with handle_errors():
        if what not in EXPORT_KINDS:
            raise ConfigError(f"Unknown export '{what}'; choose from {', '.join(EXPORT_KINDS)}")
        cfg = _state.load()
        bundle = load_model(_checkpoint_dir(cfg, checkpoint)).bundle
        out_dir = out or cfg.output_dir / "export"
        domain_desc = bundle.domain.descriptor()
        for oid in _pick_object(bundle, object_id):
            if what == "texture":
                bundle.require_appearance()
                with console.status(f"[bold green]Baking {oid}...[/]"):
                    atlas = bake_texture(bundle, oid, width, supersampling)
                path = save_atlas(atlas, out_dir / f"texture_{oid}")
                console.print(f"[green]✓ {atlas.n_charts} charts for {oid} in {path.parent}[/]")
                continue
            mesh = marching_cubes(bundle.deform.composed_field(oid), resolution)
            if mesh.is_empty:
                raise ValueError(f"Composed surface of '{oid}' is empty")
            mapped = assign_uv(map_mesh(mesh, bundle.deform, oid), atlas_kind_for(domain_desc), domain_desc)
            if what == "mesh":
                path = save_obj(mapped, out_dir / f"mesh_{oid}.obj")
            elif what == "domain-mesh":
                path = save_obj(mapped, out_dir / f"domain_mesh_{oid}.obj", use_mapped=True)
            else:
                report = distortion_report(mapped)
                path, _ = report.save(out_dir, stem=f"distortion_{oid}")
                console.print(
                    f"{oid}: E_angle={report.mean_angle:.6f} E_area={report.mean_area:.6f}"
                )
            console.print(f"[green]✓ {what} for {oid} written to {path}[/]")


@app.command()
def render(
    object_id: str = typer.Option(..., "--object", "-o", help="Object to render"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint directory"),
    eye: str = typer.Option("0,0,3", "--eye", help="Camera position x,y,z (looks at the origin)"),
    cameras: Optional[Path] = typer.Option(None, "--cameras", help="Camera file to take a view from"),
    view: int = typer.Option(0, "--view", help="View index in the camera file"),
    resolution: Optional[int] = typer.Option(None, "--resolution", "-r", help="Image size"),
    texture_override: Optional[Path] = typer.Option(
        None, "--texture-override", help="Atlas directory replacing the material network"
    ),
    shading_from: Optional[str] = typer.Option(
        None, "--shading-from", help="Object whose shading code drives the shading network"
    ),
    domain: Optional[Path] = typer.Option(None, "--domain", help="Domain file swapped in before rendering"),
    out: Path = typer.Option(Path("render.png"), "--out", help="Output PNG"),
):
    """Render one frame, optionally with a texture override, shading transfer or domain swap."""
    with handle_errors():
        cfg = _state.load()
        bundle = load_model(_checkpoint_dir(cfg, checkpoint)).bundle
        bundle.require_appearance()
        bundle.check_object(object_id)
        if shading_from is not None:
            bundle.check_object(shading_from)
        if domain is not None:
            bundle = swap_domain(bundle, load_domain(domain))
        size = resolution or cfg.render.resolution
        if cameras is not None:
            camera_list = read_cameras(cameras)
            if not 0 <= view < len(camera_list):
                raise ConfigError(f"View {view} out of range for {len(camera_list)} cameras")
            camera = camera_list[view]
        else:
            camera = Camera.look_at(_parse_triple(eye, "--eye"), focal=1.25 * size, width=size, height=size)
        atlas = load_atlas(texture_override) if texture_override is not None else None
        with console.status("[bold green]Rendering...[/]"):
            image = render_image(
                bundle,
                camera,
                object_id,
                cfg.render.to_settings(),
                resolution=size,
                texture_override=atlas,
                shading_from=shading_from,
            )
        out.parent.mkdir(parents=True, exist_ok=True)
        imageio.imwrite(out, to_uint8(image.rgb))
        console.print(f"[green]✓ Rendered {object_id} to {out}[/]")


@app.command("eval")
def evaluate(
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint directory"),
    heldout: Optional[str] = typer.Option(None, "--heldout", help="Comma-separated view indices"),
    all_views: bool = typer.Option(False, "--all-views", help="Evaluate every view"),
    resolution: int = typer.Option(64, "--resolution", "-r", help="Marching cubes resolution for CD"),
    out: Optional[Path] = typer.Option(None, "--out", help="Metrics file (default: <output>/metrics.yaml)"),
):
    """PSNR on held-out views and Chamfer distance against analytic ground truth."""
    with handle_errors():
        cfg = _state.load()
        bundle = load_model(_checkpoint_dir(cfg, checkpoint)).bundle
        views = _parse_indices(heldout)
        if views is None:
            views = list(cfg.scene.heldout)
        settings = cfg.render.to_settings()
        metrics: Dict[str, Dict] = {}

        table = Table(title="Evaluation", header_style="bold cyan")
        table.add_column("Object", style="bold")
        table.add_column("Views", justify="right")
        table.add_column("PSNR (dB)", justify="right")
        table.add_column("CD (x1e-3)", justify="right")

        for oid in bundle.object_ids:
            entry: Dict = {}
            data_dir = cfg.dataset_dir(oid)
            if bundle.appearance is not None and (data_dir / "cameras.txt").exists():
                data = load_dataset(data_dir)
                if views and not all_views:
                    _, data = data.split(views)
                with console.status(f"[bold green]Rendering {oid}...[/]"):
                    values = [
                        psnr(render_image(bundle, cam, oid, settings).rgb, img)
                        for img, cam in zip(data.images, data.cameras)
                    ]
                entry["psnr"] = [float(v) for v in values]
                entry["psnr_mean"] = float(sum(values) / len(values)) if values else None
            obj = cfg.object(oid) if oid in cfg.object_ids() else None
            if obj is not None and obj.shape is not None:
                truth = field_from_descriptor(obj.shape, Path.cwd())
                mesh = marching_cubes(bundle.deform.composed_field(oid), resolution)
                if mesh.is_empty:
                    raise ValueError(f"Composed surface of '{oid}' is empty")
                ours = sample_surface_points(mesh, CD_SAMPLES, seed=cfg.scene.seed)
                gt = surface_samples_from_field(truth, CD_SAMPLES, cfg.scene.seed, oid).points
                entry["chamfer_x1e3"] = float(chamfer_distance(ours, gt) * 1e3)
            metrics[oid] = entry
            mean = entry.get("psnr_mean")
            table.add_row(
                oid,
                str(len(entry.get("psnr", []))),
                "-" if mean is None else ("≥99 (identical)" if mean >= PSNR_SENTINEL else f"{mean:.2f}"),
                "-" if "chamfer_x1e3" not in entry else f"{entry['chamfer_x1e3']:.4f}",
            )

        path = write_yaml({"heldout": views, "objects": metrics}, out or cfg.output_dir / "metrics.yaml")
        console.print(table)
        console.print(f"[green]✓ Metrics written to {path}[/]")


@app.command()
def version():
    """Show version information."""
    console.print(
        Panel(
            f"[bold blue]sdf-param[/] v{__version__}\n"
            f"Checkpoint format: {CHECKPOINT_FORMAT_VERSION}",
            title="About",
            border_style="blue",
        )
    )


def main():
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
