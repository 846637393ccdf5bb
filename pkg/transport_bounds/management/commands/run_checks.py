from django.core.management.base import BaseCommand, CommandError

from transport_bounds.experiment import ConfigException, load_config, run_experiment, summarize, write_outputs


class Command(BaseCommand):
    help = 'Run the checks of an experiment config over its seed range and write reports'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Experiment INI file')
        parser.add_argument('-t', '--tolerance', type=float, help='Relative tolerance of every pass predicate')
        parser.add_argument('-s', '--seed-range', help='Seeds to run, START-STOP (inclusive) or a single SEED')
        parser.add_argument('-o', '--out-dir', help='Directory for reports, summary and plot data')
        parser.add_argument('-j', '--jobs', type=int, help='Worker processes')

    def _write_summary(self, results):
        for name, n_pass, n_fail, worst in summarize(results):
            style = self.style.SUCCESS if n_fail == 0 else self.style.ERROR
            self.stdout.write(style('%(name)s: %(n_pass)s passed, %(n_fail)s failed, worst ratio %(worst).6g' % {
                'name': name, 'n_pass': n_pass, 'n_fail': n_fail, 'worst': worst,
            }))

    def _write_failures(self, results):
        failures = 0
        for result in results:
            if result.error is not None:
                failures += 1
                self.stderr.write('%s seed=%s: %s' % (result.label, result.seed, result.error))
                continue
            for report in result.reports:
                if not report.passed:
                    failures += 1
                    if report.lhs <= report.rhs * (1 + report.tolerance):
                        message = '%s seed=%s: lhs=%r <= rhs=%r but its side condition fails'
                    else:
                        message = '%s seed=%s: lhs=%r > rhs=%r'
                    self.stderr.write((message + ' (tolerance %r)') % (
                        report.check_name, result.seed, report.lhs, report.rhs, report.tolerance,
                    ))
        return failures

    def handle(self, *args, **options):
        try:
            config = load_config(
                options['config'],
                tolerance=options['tolerance'],
                seed_range=options['seed_range'],
                out_dir=options['out_dir'],
                jobs=options['jobs'],
            )
        except ConfigException as exc:
            raise CommandError(str(exc), returncode=2)

        self.stdout.write('Running %(checks)s checks over seeds %(start)s-%(stop)s into %(out)s' % {
            'checks': len(config.checks), 'start': config.seeds.start, 'stop': config.seeds.stop - 1,
            'out': config.out_dir,
        })
        results = run_experiment(config)
        write_outputs(results, config.out_dir)
        self._write_summary(results)

        failures = self._write_failures(results)
        if failures:
            raise CommandError('%s failing instances, see %s' % (failures, config.out_dir), returncode=1)
