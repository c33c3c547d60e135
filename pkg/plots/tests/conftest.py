import subprocess
import sys

import pytest

COMMON = ["--dim", "1", "--n", "4", "--spin", "2", "--mass", "1", "--len", "4",
          "--workers", "1"]


def run_primary(args):
    """Drive the simulator CLI; the plots package consumes only its files."""
    proc = subprocess.run(
        [sys.executable, "-m", "diracsea.cli", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    """Generate every CSV kind once via the simulator CLI."""
    root = tmp_path_factory.mktemp("data")

    sea_dir = root / "sea_bell"
    run_primary(["bell", "--state", "sea", "--traj", "30", "--t-max", "1.0",
                 "--dt", "0.05", "--seed", "1", "--out", str(sea_dir), *COMMON])

    packet_dir = root / "packet_bell"
    run_primary(["bell", "--state", "packet", "--traj", "400", "--t-max", "1.0",
                 "--dt", "0.02", "--seed", "2", "--equivariance", "0.0,0.5,1.0",
                 "--out", str(packet_dir), *COMMON])

    packet2_dir = root / "packet_bell_2x"
    run_primary(["bell", "--state", "packet", "--traj", "800", "--t-max", "1.0",
                 "--dt", "0.02", "--seed", "3", "--equivariance", "0.0,0.5,1.0",
                 "--out", str(packet2_dir), *COMMON])

    study_dir = root / "studies"
    run_primary(["study", "--study", "vacuum_scan", "--sweep-n", "3,4,5",
                 "--sweep-spacing", "0.5,1.0", "--out", str(study_dir), *COMMON])
    run_primary(["study", "--study", "sea_gallery", "--traj", "40", "--seed", "4",
                 "--out", str(study_dir), *COMMON])

    paths = {
        "sea_traj": sea_dir / "bell" / "trajectories.csv",
        "packet_traj": packet_dir / "bell" / "trajectories.csv",
        "equivariance_1x": packet_dir / "bell" / "equivariance.csv",
        "equivariance_2x": packet2_dir / "bell" / "equivariance.csv",
        "scan": next((study_dir / "vacuum_scan").iterdir()) / "data.csv",
        "gallery": next((study_dir / "sea_gallery").iterdir()) / "data.csv",
    }
    for name, path in paths.items():
        assert path.exists(), f"{name}: {path}"
    return paths
