# Utility modules for SaliencyWorkflow
