#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""Action -> outcome log messages for pipeline stages"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
import logging
import time


class ActionOutcome(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"

    def __str__(self):
        return self.value.upper()


@dataclass
class ActionOutcomeMessage:
    """
    A class to generate messages representing a pipeline action -> outcome

    Attributes:
        action (str): The action.
        action_verbose (str): The verbose action, sent as the `details` extra.
        outcome (str): The outcome.
        details (dict): Structured values attached to the log record.

    Examples:
        >>> log_action_outcome = ActionOutcomeMessage(
                action="Filtering outage records",
                action_verbose="Filtering 1204 outage records with momentary threshold 60 s",
            )
        >>> log_action_outcome(outcome=ActionOutcome.SUCCESS)
        {
            'msg': 'Filtering outage records -> SUCCESS',
            'extra': {'details': 'Filtering 1204 outage records with momentary threshold 60 s -> SUCCESS'}
        }
    """

    action: str
    action_verbose: str = None
    outcome: str = None
    details: dict = field(default_factory=dict)

    @property
    def message(self):
        return f"{self.action} -> {self.outcome}"

    @property
    def message_verbose(self):
        return f"{self.action_verbose or self.action} -> {self.outcome}"

    def __call__(self, action=None, outcome=None, action_verbose=None, **details):
        """
        Update the action, outcome, or action_verbose attributes and return a log record.

        Returns:
            dict: keyword arguments for `logger.info` / `logger.error`.
        """
        if action:
            self.action = action
        if outcome:
            self.outcome = outcome
        if action_verbose:
            self.action_verbose = action_verbose
        self.details.update(details)

        extra = dict(details=self.message_verbose)
        extra.update(self.details)
        return dict(msg=self.message, extra=extra)


@contextmanager
def log_stage(logger: logging.Logger, action: str, action_verbose: str = None):
    """
    Log a pipeline stage as `action -> SUCCESS` or `action -> FAILED`.

    The yielded ActionOutcomeMessage can collect structured details while the stage runs.
    """
    log_action_outcome = ActionOutcomeMessage(action=action, action_verbose=action_verbose)
    start = time.perf_counter()
    try:
        yield log_action_outcome
    except Exception:
        logger.error(
            **log_action_outcome(
                outcome=ActionOutcome.FAILED, elapsed_s=time.perf_counter() - start
            )
        )
        raise
    logger.info(
        **log_action_outcome(
            outcome=ActionOutcome.SUCCESS, elapsed_s=time.perf_counter() - start
        )
    )
