import unittest

from tests.numerics_tests import *
from tests.skeleton_io_tests import *
from tests.seq2seq_tests import *
from tests.contrastive_tests import *
from tests.features_reid_tests import *
from tests.evaluation_tests import *
from tests.run_config_tests import *
from tests.experiment_tests import *
from tests.api_tests import *
from tests.acceptance_tests import *


if __name__ == '__main__':
    # run all imported test cases
    unittest.main()
