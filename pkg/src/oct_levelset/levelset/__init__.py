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

from oct_levelset.levelset.interpolation import BranchInterpolant
from oct_levelset.levelset.levelset import fit
from oct_levelset.levelset.levelset import FrontGeometry
from oct_levelset.levelset.levelset import geometry
from oct_levelset.levelset.levelset import label_branches
from oct_levelset.levelset.levelset import predict
from oct_levelset.levelset.levelset import Prediction
from oct_levelset.levelset.levelset import SheetInterpolant
from oct_levelset.levelset.levelset import SolutionSheet
from oct_levelset.levelset.levelset import sweep
from oct_levelset.levelset.levelset import SweepGrid
