"""Validation actions for the csl-reid command line."""

import argparse
import logging

from csl_reid.utils.string_utils import convert_string_to_dict

logger = logging.getLogger(__name__)


class ValidateOverrides(argparse.Action):
    """Validate and convert ``--set`` overrides to a dictionary.

    Repeated ``--set`` flags merge, later keys winning.
    """

    def __call__(self, parser, namespace, values, option_string=None):
        overrides_dict = convert_string_to_dict(values)
        if overrides_dict is None:
            logger.error('Error while validating the overrides: "%s"', values)
            raise argparse.ArgumentError(self, f"cannot parse overrides {values!r}")

        merged = dict(getattr(namespace, self.dest, None) or {})
        merged.update(overrides_dict)
        logger.debug("Setting overrides: %s", merged)
        setattr(namespace, self.dest, merged)
