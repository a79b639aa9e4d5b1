#  Copyright 2024 Hkxs
#
#  Permission is hereby granted, free of charge, to any person obtaining a copy
#  of this software and associated documentation files (the “Software”), to deal
#  in the Software without restriction, including without limitation the rights
#  to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
#  copies of the Software, and to permit persons to whom the Software is
#  furnished to do so, subject to the following conditions:
#
#  The above copyright notice and this permission notice shall be included in
#  all copies or substantial portions of the Software.
#
#  THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
#  IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
#  FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
#  AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
#  LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
#  OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
#  SOFTWARE.

from typing import Any


class OctLevelsetError(Exception):
    """
    Base class of every error raised by the package.

    Parameters
    ----------
    message : str
        Human readable description.
    code : str, optional
        Stable machine readable identifier, defaults to the class attribute.
    **details
        Extra context (offending key, dimension, branch id, ...).
    """
    code = "oct_error"

    def __init__(self, message: str, code: str | None = None, **details: Any):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class DimensionMismatchError(OctLevelsetError, ValueError):
    code = "dimension_mismatch"


class NonHermitianError(OctLevelsetError, ValueError):
    code = "non_hermitian"


class NonFiniteError(OctLevelsetError, ValueError):
    code = "non_finite"


class OutOfBoundsError(OctLevelsetError, ValueError):
    code = "out_of_bounds"


class InvalidParameterError(OctLevelsetError, ValueError):
    code = "invalid_parameter"


class AllStartsFailedError(OctLevelsetError, RuntimeError):
    code = "all_starts_failed"


class SweepFailedError(OctLevelsetError, RuntimeError):
    code = "sweep_failed"


class SheetFitError(OctLevelsetError, ValueError):
    code = "sheet_fit"


class OutOfHullError(OctLevelsetError, ValueError):
    code = "out_of_hull"


class UnknownBranchError(OctLevelsetError, KeyError):
    code = "unknown_branch"

    def __str__(self):
        return self.message


class ConfigError(OctLevelsetError, ValueError):
    """
    Invalid configuration document.

    The message is prefixed with the source line when it is known, so the
    CLI can print it as is.
    """
    code = "invalid_config"

    def __init__(self, message: str, key: str = "", line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        location = f"'{key}': " if key else ""
        super().__init__(f"{prefix}{location}{message}", key=key, line=line)
        self.key = key
        self.line = line
