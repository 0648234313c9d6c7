"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GictError(Exception):
    exit_code = 2


class ParseError(GictError):
    exit_code = 1


class SchemaError(GictError):
    exit_code = 1


class EmptyDatasetError(GictError):
    exit_code = 1


class UnknownVariableError(GictError):
    pass


class UnresolvableMissingError(GictError):
    pass


class SpuriousLevelError(GictError):
    pass


class AllSpuriousError(GictError):
    pass


class QueryError(GictError):
    pass


class CodingError(QueryError):
    pass


class UndefinedProbabilityError(QueryError):
    pass


class MustUseBoundsError(QueryError):
    pass


class ConstraintError(GictError):
    pass


class CombinatorialExplosionError(GictError):
    exit_code = 3
