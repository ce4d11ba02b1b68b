#!/usr/bin/env python3
"""
Plot plausibility pass rates per interpretation, split by scenario.
"""

import argparse
import json
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCENARIO_COLORS = {'exp': '#2E8B57', 'alt': '#DAA520'}


def collect_plausibility_results(report_path):
    """Flatten plausibility.json into rows of model, dataset, label, exp, alt, all."""
    with open(report_path, 'r', encoding='utf-8') as f:
        report = json.load(f)

    rows = []
    for model, by_dataset in sorted(report.items()):
        for dataset, by_method in sorted(by_dataset.items()):
            for method, by_composition in sorted(by_method.items()):
                for composition, values in sorted(by_composition.items()):
                    rows.append({
                        'model': model,
                        'dataset': dataset,
                        'label': method if composition == '-' else f'{method}/{composition}',
                        'baseline': composition == '-',
                        'exp': values.get('exp'),
                        'alt': values.get('alt'),
                        'all': values.get('all'),
                    })
    return rows


def create_plausibility_chart(rows, model, dataset, output_path):
    """Grouped bars of exp/alt pass rate per interpretation; baselines drawn as horizontal lines."""
    selected = [r for r in rows if r['model'] == model and r['dataset'] == dataset]
    methods = [r for r in selected if not r['baseline']]
    baselines = [r for r in selected if r['baseline']]
    if not methods:
        print(f"No interpretations to plot for {model}/{dataset}")
        return None

    fig, ax = plt.subplots(figsize=(max(8, len(methods) * 1.2), 6))
    x = np.arange(len(methods))
    width = 0.38

    for offset, scenario in ((-width / 2, 'exp'), (width / 2, 'alt')):
        # Undefined scenarios (no instances) plot as missing bars
        values = [np.nan if r[scenario] is None else r[scenario] for r in methods]
        bars = ax.bar(x + offset, values, width, color=SCENARIO_COLORS[scenario], alpha=0.85,
                      edgecolor='black', linewidth=1, label=f'{scenario} pass rate')
        for bar, value in zip(bars, values):
            if not np.isnan(value):
                ax.text(bar.get_x() + bar.get_width() / 2., value + 0.01, f'{value:.2f}',
                        ha='center', va='bottom', fontsize=7)

    for i, baseline in enumerate(baselines):
        if baseline['all'] is None:
            continue
        ax.axhline(baseline['all'], linestyle='--', linewidth=1.2, color=f'C{i + 3}',
                   label=f"{baseline['label']} (all)")

    ax.set_xticks(x)
    ax.set_xticklabels([r['label'] for r in methods], rotation=30, ha='right', fontsize=9)
    ax.set_ylabel('Pass rate', fontsize=12, fontweight='bold')
    ax.set_ylim(0, 1.05)
    ax.set_title(f'Plausibility: {model} on {dataset}', fontsize=14, fontweight='bold')
    ax.grid(True, alpha=0.3, axis='y')
    ax.legend(loc='upper right', fontsize=9, framealpha=0.9)

    plt.tight_layout()
    plt.savefig(output_path, dpi=200, bbox_inches='tight')
    plt.close(fig)
    print(f"Plausibility chart saved to: {output_path}")
    return output_path


def main():
    parser = argparse.ArgumentParser(description='Plot plausibility pass rates from a results directory')
    parser.add_argument('--results', type=str, default='workspace/results',
                        help='Results directory containing plausibility.json')
    parser.add_argument('--output-dir', type=str, default=None,
                        help='Where to write the charts (default: <results>/figures)')
    args = parser.parse_args()

    report_path = os.path.join(args.results, 'plausibility.json')
    if not os.path.exists(report_path):
        print(f"Missing report: {report_path} (run the evaluate stage first)")
        return 1

    output_dir = args.output_dir or os.path.join(args.results, 'figures')
    os.makedirs(output_dir, exist_ok=True)

    rows = collect_plausibility_results(report_path)
    for model, dataset in sorted({(r['model'], r['dataset']) for r in rows}):
        create_plausibility_chart(rows, model, dataset,
                                  os.path.join(output_dir, f'plausibility_{model}_{dataset}.png'))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
