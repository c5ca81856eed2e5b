class ConfigError(ValueError):
    """Scenario configuration is invalid. Carries every problem found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InvariantViolation(RuntimeError):
    """A conservation or capacity audit failed: always an implementation bug."""

    def __init__(self, message: str, dump: str = ""):
        self.dump = dump
        super().__init__(message if not dump else f"{message}\n{dump}")
