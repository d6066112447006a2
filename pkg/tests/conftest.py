import sys
from pathlib import Path

# make sibling test modules importable (the expm oracle lives in test_core)
sys.path.insert(0, str(Path(__file__).parent))
