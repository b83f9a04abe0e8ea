"""Error taxonomy, one class per exit code the CLI maps to."""


class ManifestError(Exception):
    """The job manifest is malformed or violates the schema (exit 2)."""


class DataError(Exception):
    """Input files disagree with the manifest or with each other (exit 3)."""


class CheckpointError(Exception):
    """A required model checkpoint is not installed (exit 4).

    The message always includes where the runner looked and how to get
    the missing artifact.
    """
