import json
import pathlib

import pandas as pd
from loguru import logger

from leadnado.evaluation import CentralityComparison, EvalReport, initiator_support

logger.add(snakemake.log[0], level="INFO")

with logger.catch():
    logger.info(f"Collating {len(snakemake.input.reports)} evaluation reports")

    datasets = []
    for path in snakemake.input.reports:
        datasets.extend(EvalReport.from_json(path).datasets)

    report = EvalReport(datasets=datasets)
    report.to_dataframe().to_csv(snakemake.output.reports, index=False)
    report.aggregate().to_csv(snakemake.output.medians, index=False)

    if snakemake.input.centrality:
        logger.info("Collating centrality comparisons")
        comparisons = []
        for path in snakemake.input.centrality:
            with open(path) as f:
                comparisons.append(CentralityComparison(**json.load(f)))

        outdir = pathlib.Path(snakemake.params.centrality_dir)
        (
            pd.DataFrame([c.jaccard for c in comparisons])
            .median()
            .rename("median_jaccard")
            .to_csv(outdir / "centrality_jaccard.csv", index_label="measure")
        )
        initiator_support(comparisons).to_csv(outdir / "initiator_support.csv")
