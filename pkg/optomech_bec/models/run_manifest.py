import json
import logging
from dataclasses import asdict, dataclass, field

_logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """Provenance record written next to every set of outputs."""

    command: str
    arguments: dict
    config: dict
    code_version: str
    wall_time_s: float = 0.0
    exit_code: int = 0
    error: str = None
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add_warning(self, message):
        if message not in self.warnings:
            self.warnings.append(message)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        """
        Write the manifest as JSON.

        Args:
            path (Path): Destination file.

        Returns:
            Path: The written path.
        """
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write('\n')
        _logger.info(f"Wrote run manifest {path}")
        return path
