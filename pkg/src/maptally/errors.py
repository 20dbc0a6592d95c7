"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when input data violates a documented contract.

    Covers malformed file contents, legend violations, inconsistent
    shapes and out-of-range values. I/O failures (missing files,
    short reads) raise OSError subclasses instead; the CLI maps the
    two families to distinct exit codes.
    """
