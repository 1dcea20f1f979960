# SPDX-FileCopyrightText: Copyright (c) 2024 NVIDIA CORPORATION & AFFILIATES. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from typing import List, Optional


class SomDsaError(Exception):
    """Base class for all errors raised by `som_dsa`."""


class InstanceError(SomDsaError, ValueError):
    """The network instance violates the schema or one of its invariants."""

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        self.violations = list(violations) if violations else []
        if self.violations:
            message = f'{message}: ' + '; '.join(self.violations)
        super().__init__(message)


class ShapeError(SomDsaError, ValueError):
    pass


class InstanceShapeError(InstanceError, ShapeError):
    pass


class EmptyInstanceError(InstanceError):
    pass


class DegenerateDemandError(SomDsaError, ValueError):
    pass


class InfeasibleRowError(SomDsaError, ValueError):
    pass


class SearchSpaceTooLargeError(SomDsaError, RuntimeError):
    def __init__(self, size: int, bound: int):
        self.size = size
        self.bound = bound
        super().__init__(f'search space of {size} feasible assignments exceeds the exact-solver bound of {bound}')


class ConfigError(SomDsaError, ValueError):
    pass


class EventStreamError(SomDsaError, ValueError):
    pass


class UnknownPrimaryUserError(SomDsaError, LookupError):
    pass
