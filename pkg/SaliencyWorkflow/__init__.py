# Saliency Workflow: toy language models, saliency interpretations and their benchmarks
