from io import StringIO


def run_management_command(command_class, name, params=None):
    command = command_class()
    parser = command.create_parser('manage.py', name)
    options = parser.parse_args(params or [])
    cmd_options = vars(options)
    stdout, stderr = StringIO(), StringIO()
    command.execute(stdout=stdout, stderr=stderr, **cmd_options)
    return stdout.getvalue(), stderr.getvalue()
