"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""


class PriseError(Exception):
    code = "prise_error"


class InvalidImage(PriseError, ValueError):
    code = "invalid_image"


class InvalidSpec(PriseError, ValueError):
    code = "invalid_spec"


class InvalidConfig(PriseError, ValueError):
    code = "invalid_config"


class ShapeMismatch(PriseError, ValueError):
    code = "shape_mismatch"


class ShapeTooSmall(PriseError, ValueError):
    code = "shape_too_small"


class SingularHomography(PriseError, ArithmeticError):
    code = "singular_homography"


class DegenerateCorners(PriseError, ArithmeticError):
    code = "degenerate_corners"


class ProjectiveDivideByZero(PriseError, ArithmeticError):
    code = "projective_divide_by_zero"


class SingularNormalMatrix(PriseError, ArithmeticError):
    code = "singular_normal_matrix"


class LambdaOutOfRange(PriseError, ValueError):
    code = "lambda_out_of_range"


class MuTooSmall(PriseError, ValueError):
    code = "mu_too_small"


class NonpositiveMu(PriseError, ValueError):
    code = "nonpositive_mu"


class NoForwardState(PriseError, RuntimeError):
    code = "no_forward_state"


class CorruptFile(PriseError, IOError):
    code = "corrupt_file"


class ConfigMismatch(PriseError, ValueError):
    code = "config_mismatch"
