"""Run the acceptance suite and print only the per-criterion lines."""
import subprocess
import sys
from pathlib import Path

root = Path(__file__).resolve().parents[1]
proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-s", str(root / "tests" / "test_acceptance.py")],
                      capture_output=True, text=True, cwd=root)
lines = sorted({l for l in proc.stdout.splitlines() if l.startswith("criterion ")})
print("\n".join(lines))
sys.exit(proc.returncode)
