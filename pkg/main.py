"""
GraphTEE command-line entry point:
✓ Synthetic and TU-based graph-treatment datasets with recorded seeds
✓ Two-stage confounder selection and balanced outcome estimation
✓ Baselines, multi-seed experiments and parameter sweeps
✓ Numerical checks of the bounds and of the gradients
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from graphtee.cli import dispatch  # noqa: E402

if __name__ in {"__main__", "__mp_main__"}:
    sys.exit(dispatch())
