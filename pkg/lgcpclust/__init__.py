import logging

import click

from . import config
from .commands import register_commands, register_error_handlers


def create_cli(test_config=None):
    settings = {'LOG_LEVEL': config.LOG_LEVEL, 'WORKERS': config.WORKERS}
    if test_config:
        settings.update(test_config)

    logging.basicConfig(level=settings['LOG_LEVEL'],
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')

    @click.group(cls=ErrorHandlingGroup, context_settings={'help_option_names': ['-h', '--help']})
    @click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                  help='flat key=value file; flags override it, it overrides the environment')
    @click.pass_context
    def cli(ctx, config_path):
        """Cluster multi-type event sequences with mixtures of log-Gaussian Cox processes."""
        ctx.obj = settings
        if config_path:
            values = config.read_config_file(config_path)
            ctx.default_map = {name: values for name in cli.commands}

    register_commands(cli, settings)
    register_error_handlers(cli)
    return cli


class ErrorHandlingGroup(click.Group):
    """A click group that hands exceptions to handlers registered by type."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.error_handlers = {}

    def register_error_handler(self, exc_type, handler):
        self.error_handlers[exc_type] = handler

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except tuple(self.error_handlers) as e:
            for exc_type, handler in self.error_handlers.items():
                if isinstance(e, exc_type):
                    handler(ctx, e)
            raise
