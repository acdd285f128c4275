USAGE = 2
NUMERICAL = 1


class LgcpError(Exception):
    """Base error. `error` is a dict with a 'code' and a 'description',
    `exit_code` is what the command line exits with.
    """
    exit_code = USAGE

    def __init__(self, error, exit_code=None):
        super().__init__(error.get('description', ''))
        self.error = error
        if exit_code is not None:
            self.exit_code = exit_code


class ParseError(LgcpError):
    def __init__(self, lineno, description):
        super().__init__({
            'code': 'parse_error',
            'description': f'line {lineno}: {description}'
            })
        self.lineno = lineno


class DomainError(LgcpError):
    def __init__(self, description):
        super().__init__({
            'code': 'domain_error',
            'description': description
            })


class PreconditionError(LgcpError):
    def __init__(self, description):
        super().__init__({
            'code': 'precondition_failed',
            'description': description
            })


class InsufficientDataError(LgcpError):
    def __init__(self, pair, description):
        super().__init__({
            'code': 'insufficient_data',
            'description': f'marks {pair}: {description}'
            })
        self.pair = pair


class FormatError(LgcpError):
    def __init__(self, offset, description):
        super().__init__({
            'code': 'format_error',
            'description': f'offset {offset}: {description}'
            })
        self.offset = offset


class DegenerateClusterError(LgcpError):
    exit_code = NUMERICAL

    def __init__(self, cluster, description):
        super().__init__({
            'code': 'degenerate_cluster',
            'description': f'cluster {cluster}: {description}'
            })
        self.cluster = cluster


class NumericalError(LgcpError):
    exit_code = NUMERICAL

    def __init__(self, description):
        super().__init__({
            'code': 'numerical_failure',
            'description': description
            })


class SimulationError(NumericalError):
    pass
