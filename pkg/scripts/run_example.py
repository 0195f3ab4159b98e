"""
Pipeline de aceitação com a cena de exemplo: render -> fit -> metrics, duas vezes,
comparando os artefatos byte a byte.

Uso: python scripts/run_example.py [diretório de saída]
"""
import filecmp
import logging
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sweepdepth.api.cli import main  # noqa: E402
from sweepdepth.utils.logging_config import setup_logging  # noqa: E402

logger = logging.getLogger(__name__)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENE = os.path.join(ROOT, 'data', 'example_scene.json')
CONFIG = os.path.join(ROOT, 'data', 'example_config.json')
COMPARED = ('disparity.pfm', 'depth.pfm', 'beta.pfm', 'loss.csv', 'metrics.json')


def run_once(workdir: str) -> int:
    render_dir = os.path.join(workdir, 'render')
    fit_dir = os.path.join(workdir, 'fit')
    steps = [
        ['render', SCENE, render_dir],
        ['fit', os.path.join(render_dir, 'frame_0.ppm'), os.path.join(render_dir, 'frame_1.ppm'),
         os.path.join(render_dir, 'frame_2.ppm'), '--poses', os.path.join(render_dir, 'poses.json'),
         '--config', CONFIG, '--out', fit_dir],
        ['metrics', os.path.join(fit_dir, 'depth.pfm'), os.path.join(render_dir, 'depth_0.pfm'),
         '--out', os.path.join(fit_dir, 'metrics.json')],
    ]
    for argv in steps:
        code = main(argv)
        if code != 0:
            logger.error(f"Etapa {argv[0]} falhou com código {code}")
            return code
    return 0


def run_example(outdir: str) -> int:
    for attempt in ('a', 'b'):
        code = run_once(os.path.join(outdir, attempt))
        if code != 0:
            return code
    for name in COMPARED:
        first = os.path.join(outdir, 'a', 'fit', name)
        second = os.path.join(outdir, 'b', 'fit', name)
        if not filecmp.cmp(first, second, shallow=False):
            logger.error(f"Saídas diferentes entre execuções: {name}")
            return 1
    logger.info("Execuções idênticas byte a byte.")
    return 0


if __name__ == "__main__":
    setup_logging()
    sys.exit(run_example(sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, 'output', 'example')))
