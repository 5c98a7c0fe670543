"""Write the desk comparison as JSON configs usable with ``stepseq compare``."""

import json
import sys
from pathlib import Path

from stepseq.desk import desk_variants

out = Path(sys.argv[1] if len(sys.argv) > 1 else "configs")
out.mkdir(parents=True, exist_ok=True)
for seed in (0, 1, 2):
    doc = {"experiments": [c.to_dict() for c in desk_variants(seed)]}
    (out / f"desk_compare_seed{seed}.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(out / f"desk_compare_seed{seed}.json")
