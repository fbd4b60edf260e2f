"""Regenerate src/trofi/calibration.json (1000 episodes per policy per env)."""
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from trofi import envs  # noqa: E402

EPISODES = 1000
SEED = 0


def main():
    entries = [envs.calibrate(name, EPISODES, SEED) for name in envs.ENV_NAMES]
    out = envs.CALIBRATION_PATH
    with open(out, "w") as f:
        json.dump(entries, f, indent=2)
        f.write("\n")
    for e in entries:
        print(f"{e['env']}: random {e['random_score']:.3f}, expert {e['expert_score']:.3f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
