"""
Context for Report Rendering
"""

from SaliencyWorkflow.util.stage_utils import StageContext


class RenderContext(StageContext):
    """
    Context for the render step: CSV tables from the JSON reports and HTML
    pages from the plausibility records.
    """

    stage_name = 'render'
    producer = 'evaluate'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)
        self.reports = {}

    @property
    def stage_dir(self):
        return self.layout.html_dir

    def fingerprint_sections(self):
        return self.config.render_fingerprint_sections()

    def enabled_tests(self):
        evaluate = self.config.evaluate
        return [test for test in ('plausibility', 'input_consistency', 'model_consistency') if getattr(evaluate, test)]

    def required_inputs(self):
        paths = [self.layout.report(test) for test in self.enabled_tests()]
        paths += [self.layout.dataset(name) for name in self.config.evaluate.datasets]
        return paths
