pub mod compare;
pub mod curate;
pub mod dist;
pub mod eval;
pub mod rerank;
pub mod rewards;

use anyhow::Context;

use rubric_rerank::data::{load_dataset, Dataset, DatasetPaths};
use rubric_rerank::rubric::{RubricConfig, RubricError};

use crate::{CliError, CliResult, DatasetArgs};

pub fn load_rubric_config(path: Option<&std::path::Path>) -> CliResult<RubricConfig> {
    match path {
        None => Ok(RubricConfig::shipped_defaults()),
        Some(path) => RubricConfig::load_with_defaults(path)
            .map_err(|e| CliError::validation(e.to_string())),
    }
}

pub fn load_dataset_from_args(args: &DatasetArgs, depth: usize) -> CliResult<Dataset> {
    let rubrics = load_rubric_config(args.rubrics.as_deref())?;
    if !rubrics.contains(&args.dataset) {
        return Err(CliError::validation(format!(
            "no rubric configured for dataset {:?}; add it to a --rubrics file",
            args.dataset
        )));
    }
    let paths = DatasetPaths::new(&args.dataset_root, &args.dataset);
    load_dataset(
        &paths,
        &rubrics,
        depth,
        args.strict,
        Some(args.length_control),
    )
    .map_err(|e| match e {
        rubric_rerank::data::DataError::Rubric(RubricError::UnknownDataset { dataset }) => {
            CliError::validation(format!("no rubric configured for dataset {dataset:?}"))
        }
        other => CliError::Runtime(
            anyhow::Error::new(other).context(format!("loading dataset {:?}", args.dataset)),
        ),
    })
}

pub fn read_to_string(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::from)
}
