"""
Artifact path manager for study and report outputs
"""
from pathlib import Path
from typing import Dict, Optional, Union

from config.environment import get_config


class ArtifactPaths:
    """Map artifact kinds to files under the configured output directory"""

    def __init__(self, environment: Optional[str] = None, output_dir: Optional[Union[str, Path]] = None):
        self.config = get_config(environment)
        self.output_dir = Path(output_dir) if output_dir is not None else self.config.output_dir

    def get_file_path(self, kind: str, scenario: str) -> Path:
        file_mappings: Dict[str, str] = {
            "draws": f"{scenario}_draws.csv",
            "summary": f"{scenario}_summary.json",
            "report": f"{scenario}_report.json",
        }
        if kind not in file_mappings:
            raise ValueError(f"Unknown artifact kind '{kind}' (known: {', '.join(file_mappings)})")
        return self.output_dir / file_mappings[kind]

    def ensure_dir(self) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir
