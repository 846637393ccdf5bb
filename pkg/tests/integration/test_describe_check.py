from django.core.management import CommandError

import pytest

from tests.integration import run_management_command
from transport_bounds.experiment import CHECKS
from transport_bounds.management.commands.describe_check import Command as DescribeCheckCommand


def describe_check(name):
    return run_management_command(DescribeCheckCommand, 'describe_check', [name])


@pytest.mark.parametrize('name', sorted(CHECKS))
def test_describe_check__ok(name):
    stdout, stderr = describe_check(name)
    assert stdout.startswith(name + ': ')
    assert 'hypotheses:' in stdout
    assert 'knobs:' in stdout
    assert stderr == ''


def test_describe_check_thm3__ok():
    stdout, _ = describe_check('check_thm3')
    assert '2 * sqrt(rho0) * W2(mu, nu)' in stdout
    assert '  target = mixed' in stdout
    assert 'seeded: yes' in stdout


def test_describe_check__raise():
    with pytest.raises(CommandError, match='valid checks are') as exc_info:
        describe_check('check_thm7')
    assert exc_info.value.returncode == 2
