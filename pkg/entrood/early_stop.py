from typing import List, Optional

from loguru import logger


class EarlyStop:
    """ Monitors the average log-likelihood of an iterative fit and
    activates a switch to interrupt it once the absolute improvement
    falls below a tolerance.

    It also records the full trajectory and flags any decrease larger
    than the allowed slack, which for EM indicates a numerical problem.
    """

    def __init__(self,
                 tolerance: float = 1e-7,
                 patience: int = 1,
                 slack: float = 1e-9) -> None:
        """ Initialize the early stopping class.

        Args:
            tolerance (float): absolute improvement threshold below which
                the counter for early stopping starts.
            patience (int): number of consecutive below-threshold
                improvements before stopping.
            slack (float): largest decrease tolerated before it is
                reported as a monotonicity violation.
        """

        self.tolerance = tolerance
        self.patience = patience
        self.slack = slack

        self.stop_training = False
        self.trajectory = []
        self.violations = []
        self.counter = 0
        self._restart_ix = 0

    def reset(self) -> None:
        """ Restart the improvement counter, keeping the trajectory.
        Used after a discontinuous change of the parameters. """

        self.counter = 0
        self.stop_training = False
        self._restart_ix = len(self.trajectory)

    def check_convergence(self, value: float) -> None:
        """ Append a new objective value and update the stop flag.

        Args:
            value (float): the current average log-likelihood.
        """

        self.trajectory.append(float(value))
        if len(self.trajectory) - self._restart_ix < 2:
            return

        improvement = self.trajectory[-1] - self.trajectory[-2]
        if improvement < -self.slack:
            logger.warning("Objective decreased by {:.3e} at iteration {:d}.".format(
                -improvement, len(self.trajectory) - 1))
            self.violations.append(len(self.trajectory) - 1)

        if abs(improvement) < self.tolerance:
            self.counter += 1
        else:
            self.counter = 0

        if self.counter >= self.patience:
            self.stop_training = True

    @property
    def last(self) -> Optional[float]:
        return self.trajectory[-1] if self.trajectory else None

    def history(self) -> List[float]:
        return list(self.trajectory)
