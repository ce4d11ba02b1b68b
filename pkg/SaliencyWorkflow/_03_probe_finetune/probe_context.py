"""
Context for Probe Fine-Tuning
"""

from SaliencyWorkflow.util.stage_utils import StageContext

PROBE_KINDS = ('number', 'gender')


class ProbeContext(StageContext):
    """
    Context for the probe step: one probe head per (architecture, agreement kind).
    """

    stage_name = 'probe'
    producer = 'train'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)
        self.kinds = kwargs.get('kinds', PROBE_KINDS)

        # Probe-tuning instances by kind; held-out instances by tuned model id
        self.probe_data = {}
        self.heldout = {}

    @property
    def stage_dir(self):
        return self.layout.probe_dir

    def fingerprint_sections(self):
        return self.config.probe_fingerprint_sections()

    def required_inputs(self):
        paths = [self.layout.lm_checkpoint(arch) for arch in self.config.model.architectures]
        paths += [self.layout.probe_data(kind) for kind in self.kinds]
        return paths
