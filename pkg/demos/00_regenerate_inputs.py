"""Regenerate the bundled inputs under demos/ (data/ and scenarios/).

Every bundled file is a deterministic function of fixed seeds, so running
this script reproduces the committed files byte for byte.  Run it after
changing the synthetic generators, or to convince yourself nothing drifted.
"""

from pathlib import Path

from exhaz import write_bundled_data

HERE = Path(__file__).resolve().parent

if __name__ == "__main__":
    for path in write_bundled_data(HERE):
        print(f"wrote {path.relative_to(HERE)}")
