#!/usr/bin/env python3
"""
Startup script for the BatteryTTT command line without installing the package.

Usage:
    python run_batteryttt.py simulate --preset calce --out data/cycles.csv
    python run_batteryttt.py gradcheck
    BATTERYTTT_LOG=DEBUG python run_batteryttt.py adapt --checkpoint ... --in ... --out ...
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from batteryttt.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
