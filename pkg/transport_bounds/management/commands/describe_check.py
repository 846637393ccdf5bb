from django.core.management.base import BaseCommand, CommandError

from transport_bounds.experiment import UnknownCheckException, describe


class Command(BaseCommand):
    help = 'Print the inequality, reference, hypotheses and generator knobs of a check'

    def add_arguments(self, parser):
        parser.add_argument('check', help='Check name, e.g. check_thm1')

    def handle(self, *args, **options):
        try:
            self.stdout.write(describe(options['check']))
        except UnknownCheckException as exc:
            raise CommandError(str(exc), returncode=2)
