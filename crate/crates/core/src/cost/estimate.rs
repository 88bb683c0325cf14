use std::collections::BTreeMap;

use super::{chi, gamma, ChiKind, CostMatrix, Gamma, OptimizerConfig, TokenVector};
use crate::error::{Error, Result};
use crate::gateway::count_tokens;
use crate::physical::{PhysicalOp, PhysicalPlan, TransformTask, VectorJoinKind};
use crate::plan::{PromptContext, ScalarExpr, TransformMode, TransformSpec};
use crate::relation::Value;

/// Assumed width of one model-produced value.
const VALUE_CHARS: f64 = 24.0;
/// Extraction yields about one row per this many input tokens.
const TOKENS_PER_EXTRACTED_ROW: f64 = 15.0;
const LABEL_OUTPUT_TOKENS: f64 = 4.0;
const INFER_OUTPUT_TOKENS: f64 = 4.0;
const CODE_SAMPLE_ROWS: f64 = 3.0;
const JUDGE_OUTPUT_TOKENS: f64 = 1.0;
const SHORT_OUTPUT_TOKENS: f64 = 8.0;

/// Optimizer configuration plus the current matrix of every model.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub config: OptimizerConfig,
    pub matrices: BTreeMap<String, CostMatrix>,
}

impl CostModel {
    pub fn new(config: OptimizerConfig, matrices: BTreeMap<String, CostMatrix>) -> Result<CostModel> {
        config.validate()?;
        for m in matrices.values() {
            m.validate()?;
        }
        Ok(CostModel { config, matrices })
    }

    pub fn matrix(&self, model: &str) -> Result<&CostMatrix> {
        self.matrices
            .get(model)
            .ok_or_else(|| Error::Cost(format!("no cost matrix for model '{model}'")))
    }
}

/// Plan total broken into its terms. `total = cost_term + λ·loss_term +
/// chi_weight·chi_sum`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanCost {
    pub cost_term: f64,
    pub loss_term: f64,
    /// Unweighted Σχ.
    pub chi_sum: f64,
    pub lambda: f64,
    pub chi_weight: f64,
    pub total: f64,
}

impl PlanCost {
    pub fn at_lambda(&self, lambda: f64) -> f64 {
        self.cost_term + lambda * self.loss_term + self.chi_weight * self.chi_sum
    }
}

/// Candidates in plan-id order with their costs; `selected` indexes both.
#[derive(Debug, Clone)]
pub struct Selection {
    pub plans: Vec<PhysicalPlan>,
    /// Failed candidates carry the reason.
    pub costs: Vec<std::result::Result<PlanCost, String>>,
    pub selected: usize,
}

impl Selection {
    pub fn chosen(&self) -> &PhysicalPlan {
        &self.plans[self.selected]
    }

    pub fn into_chosen(mut self) -> PhysicalPlan {
        self.plans.swap_remove(self.selected)
    }
}

fn tokens(chars: f64, cfg: &OptimizerConfig) -> f64 {
    chars / cfg.chars_per_token
}

fn calls(n: f64, batch: usize) -> f64 {
    (n / batch as f64).ceil()
}

fn per_tuple_output(op: &PhysicalOp, avg_chars: f64, cfg: &OptimizerConfig) -> f64 {
    match op {
        PhysicalOp::SemanticJoin { .. } | PhysicalOp::SemanticFilter { .. } => JUDGE_OUTPUT_TOKENS,
        PhysicalOp::SemanticScan { spec, .. } => spec_output(spec, TransformTask::for_mode(spec.mode), avg_chars, cfg),
        PhysicalOp::SemanticTransform { spec, task, .. } => spec_output(spec, *task, avg_chars, cfg),
        _ => 0.0,
    }
}

fn spec_output(spec: &TransformSpec, task: TransformTask, avg_chars: f64, cfg: &OptimizerConfig) -> f64 {
    match task {
        TransformTask::Extract => extracted_rows_per_input(avg_chars, cfg) * tokens(extracted_row_chars(spec), cfg),
        TransformTask::Synthesize => 0.25 * tokens(avg_chars, cfg),
        TransformTask::Map | TransformTask::Classify | TransformTask::Normalize => {
            SHORT_OUTPUT_TOKENS * spec.columns.len() as f64
        }
    }
}

fn extracted_rows_per_input(avg_chars: f64, cfg: &OptimizerConfig) -> f64 {
    (tokens(avg_chars, cfg) / TOKENS_PER_EXTRACTED_ROW).max(1.0)
}

/// One JSON object line per row.
fn extracted_row_chars(spec: &TransformSpec) -> f64 {
    2.0 + spec
        .columns
        .iter()
        .map(|c| c.field.as_deref().unwrap_or(&c.name).len() as f64 + 6.0 + VALUE_CHARS)
        .sum::<f64>()
}

fn batch_of(op: &PhysicalOp, cfg: &OptimizerConfig) -> usize {
    match op {
        PhysicalOp::SemanticJoin { batch, .. } | PhysicalOp::SemanticFilter { batch, .. } => (*batch).max(1),
        PhysicalOp::SemanticScan { spec, .. } | PhysicalOp::SemanticTransform { spec, .. }
            if spec.mode == TransformMode::Synthesize =>
        {
            usize::MAX
        }
        _ => cfg.transform_batch,
    }
}

/// Tokens of one model-backed operator over `n` tuples of `avg_chars`.
///
/// t_input = requests·(template + context) + n·avg_tokens and t_output =
/// n·per_tuple_output, where requests = ceil(n / batch). A single request
/// reduces to template + context + n·avg_tokens. n = 0 yields (0, 0).
pub fn estimate_tokens(op: &PhysicalOp, n: f64, avg_chars: f64, ctx_tokens: u64, cfg: &OptimizerConfig) -> TokenVector {
    if n <= 0.0 {
        return TokenVector::default();
    }
    let requests = calls(n, batch_of(op, cfg)).max(1.0);
    let t_in = requests * (cfg.template_tokens + ctx_tokens) as f64 + n * tokens(avg_chars, cfg);
    let t_out = n * per_tuple_output(op, avg_chars, cfg);
    TokenVector::new(t_in.ceil() as u64, t_out.ceil() as u64)
}

fn embed_tokens(n: f64, avg_chars: f64, cfg: &OptimizerConfig) -> TokenVector {
    TokenVector::new((n * tokens(avg_chars, cfg)).ceil() as u64, 0)
}

/// Characters of one value of `column` in `plan`'s output.
fn column_chars(plan: &PhysicalPlan, column: Option<&str>) -> f64 {
    let row = plan.ann.row_chars;
    match column {
        None => row,
        Some(c) if c == "text" || c.ends_with(".text") => row,
        Some(_) => {
            let visible = plan.schema.columns().iter().filter(|c| !c.hidden).count().max(1);
            row / visible as f64
        }
    }
}

fn operand_chars(plan: &PhysicalPlan, e: &ScalarExpr) -> f64 {
    match e {
        ScalarExpr::Column(c) => column_chars(plan, Some(c)),
        ScalarExpr::Literal(v) => v.render().chars().count() as f64,
        _ => plan.ann.row_chars,
    }
}

fn literal_chars(e: &ScalarExpr) -> f64 {
    match e {
        ScalarExpr::Literal(Value::Text(s)) => s.chars().count() as f64,
        _ => 0.0,
    }
}

fn add_usage(usage: &mut Vec<(String, TokenVector)>, model: &str, t: TokenVector) {
    if t.is_zero() {
        return;
    }
    match usage.iter_mut().find(|(m, _)| m == model) {
        Some((_, acc)) => *acc += t,
        None => usage.push((model.to_string(), t)),
    }
}

/// Fills rows, row width, per-model token estimates and χ bottom-up.
pub fn annotate(plan: &mut PhysicalPlan, model: &CostModel, ctx: &PromptContext) {
    let ctx_tokens = count_tokens(&ctx.digest());
    annotate_node(plan, &model.config, ctx_tokens);
}

fn join_rows(l: f64, r: f64, cfg: &OptimizerConfig) -> f64 {
    (cfg.default_selectivity * l * r).min(l.max(r) * cfg.join_cap_factor)
}

fn annotate_node(plan: &mut PhysicalPlan, cfg: &OptimizerConfig, ctx_tokens: u64) {
    for c in plan.children.iter_mut() {
        annotate_node(c, cfg, ctx_tokens);
    }
    let mut usage = Vec::new();
    let (n, child_chars) = plan
        .children
        .first()
        .map(|c| (c.ann.rows, c.ann.row_chars))
        .unwrap_or((0.0, 0.0));
    let sel = cfg.default_selectivity;
    let (rows, row_chars, chi_v) = match &plan.op {
        PhysicalOp::TableScan { stats, .. } | PhysicalOp::FileScan { stats, .. } | PhysicalOp::DirectoryScan { stats, .. } => {
            let rows = stats.rows as f64;
            (rows, stats.avg_row_chars(), chi(ChiKind::Scan { n: rows }))
        }
        PhysicalOp::SemanticScan { stats, spec, model, .. } => {
            let chunks = stats.rows as f64;
            let avg = stats.avg_row_chars();
            add_usage(&mut usage, model, estimate_tokens(&plan.op, chunks, avg, ctx_tokens, cfg));
            add_usage(&mut usage, model, inference_tokens(spec, chunks, ctx_tokens, cfg));
            let (rows, chars) = transform_shape(spec, TransformTask::for_mode(spec.mode), chunks, avg, cfg);
            (rows, chars, chi(ChiKind::Scan { n: chunks }))
        }
        PhysicalOp::EmbeddingScan { columns, model } => {
            for c in columns {
                add_usage(&mut usage, model, embed_tokens(n, column_chars(&plan.children[0], Some(c)), cfg));
            }
            (n, child_chars, 0.0)
        }
        PhysicalOp::SemanticTransform { spec, task, model } => {
            let avg = column_chars(&plan.children[0], spec.input.as_deref());
            add_usage(&mut usage, model, estimate_tokens(&plan.op, n, avg, ctx_tokens, cfg));
            add_usage(&mut usage, model, inference_tokens(spec, n, ctx_tokens, cfg));
            let (rows, chars) = transform_shape(spec, *task, n, avg, cfg);
            let chars = if spec.mode == TransformMode::Map { child_chars + chars } else { chars };
            (rows, chars, 0.0)
        }
        PhysicalOp::CodeExecution { spec, model } => {
            let avg = column_chars(&plan.children[0], spec.input.as_deref());
            if n > 0.0 {
                let sample = n.min(CODE_SAMPLE_ROWS);
                let t_in = (cfg.template_tokens + ctx_tokens) as f64 + sample * tokens(avg, cfg);
                let t_out = VALUE_CHARS * spec.columns.len() as f64;
                add_usage(&mut usage, model, TokenVector::new(t_in.ceil() as u64, t_out as u64));
            }
            let task = TransformTask::for_mode(spec.mode);
            let (rows, chars) = transform_shape(spec, task, n, avg, cfg);
            let chars = if spec.mode == TransformMode::Map { child_chars + chars } else { chars };
            (rows, chars, chi(ChiKind::Linear { n }))
        }
        PhysicalOp::TopKBySimilarity { query, k, model, .. } => {
            if n > 0.0 {
                add_usage(&mut usage, model, embed_tokens(1.0, query.chars().count() as f64, cfg));
            }
            (n.min(*k as f64), child_chars, chi(ChiKind::Linear { n }))
        }
        PhysicalOp::VectorJoin { kind, .. } => {
            let (l, r) = (plan.children[0].ann.rows, plan.children[1].ann.rows);
            let chars = plan.children[0].ann.row_chars + plan.children[1].ann.row_chars;
            let kind = match kind {
                VectorJoinKind::NestedLoop => ChiKind::NestedLoop { left: l, right: r },
                VectorJoinKind::Hash => ChiKind::HashJoin { left: l, right: r },
                VectorJoinKind::SortedMerge => ChiKind::SortMerge { left: l, right: r },
            };
            (join_rows(l, r, cfg), chars, chi(kind))
        }
        PhysicalOp::SemanticJoin { left, right, model, .. } => {
            let (lp, rp) = (&plan.children[0], &plan.children[1]);
            let pairs = lp.ann.rows * rp.ann.rows;
            let item = column_chars(lp, Some(left)) + column_chars(rp, Some(right)) + 5.0;
            add_usage(&mut usage, model, estimate_tokens(&plan.op, pairs, item, ctx_tokens, cfg));
            (join_rows(lp.ann.rows, rp.ann.rows, cfg), lp.ann.row_chars + rp.ann.row_chars, 0.0)
        }
        PhysicalOp::HashJoinExact { .. } | PhysicalOp::NestedLoopJoinExact { .. } => {
            let (l, r) = (plan.children[0].ann.rows, plan.children[1].ann.rows);
            let chars = plan.children[0].ann.row_chars + plan.children[1].ann.row_chars;
            let kind = if matches!(plan.op, PhysicalOp::HashJoinExact { .. }) {
                ChiKind::HashJoin { left: l, right: r }
            } else {
                ChiKind::NestedLoop { left: l, right: r }
            };
            (join_rows(l, r, cfg), chars, chi(kind))
        }
        PhysicalOp::SemanticCluster {
            target,
            k,
            model,
            embed_model,
            ..
        } => {
            let width = column_chars(&plan.children[0], Some(target));
            add_usage(&mut usage, embed_model, embed_tokens(n, width, cfg));
            if n > 0.0 {
                let groups = k.map(|k| k as f64).unwrap_or_else(|| n.sqrt().ceil().min(8.0)).min(n).max(1.0);
                let t_in = groups * (cfg.template_tokens + ctx_tokens) as f64 + n * tokens(width, cfg);
                let t_out = groups * LABEL_OUTPUT_TOKENS;
                add_usage(&mut usage, model, TokenVector::new(t_in.ceil() as u64, t_out as u64));
            }
            (n, child_chars + VALUE_CHARS, 0.0)
        }
        PhysicalOp::HashAggregate { keys, .. } => {
            let groups = if keys.is_empty() { 1.0 } else { n.sqrt().ceil().min(n) };
            (groups, child_chars, chi(ChiKind::Linear { n }))
        }
        PhysicalOp::Sort { .. } => (n, child_chars, chi(ChiKind::Sort { n })),
        PhysicalOp::SemanticFilter { predicate, model, .. } => {
            let child = &plan.children[0];
            let item = match predicate {
                ScalarExpr::SemMatch { left, right, .. } => operand_chars(child, left) + operand_chars(child, right) + 5.0,
                _ => child.ann.row_chars,
            };
            add_usage(&mut usage, model, estimate_tokens(&plan.op, n, item, ctx_tokens, cfg));
            (sel * n, child_chars, 0.0)
        }
        PhysicalOp::SimilarityFilter { left, right, model, .. } => {
            if n > 0.0 {
                let lit = literal_chars(left) + literal_chars(right);
                add_usage(&mut usage, model, embed_tokens(1.0, lit, cfg));
            }
            (sel * n, child_chars, chi(ChiKind::Linear { n }))
        }
        PhysicalOp::FilterExec { .. } => (sel * n, child_chars, chi(ChiKind::Linear { n })),
        PhysicalOp::ProjectExec { .. } => (n, child_chars, chi(ChiKind::Linear { n })),
    };
    plan.ann.rows = rows;
    plan.ann.row_chars = row_chars;
    plan.ann.usage = usage;
    plan.ann.chi = chi_v;
    plan.ann.gamma = None;
}

/// Schema inference: one short request per inferred column.
fn inference_tokens(spec: &TransformSpec, n: f64, ctx_tokens: u64, cfg: &OptimizerConfig) -> TokenVector {
    if n <= 0.0 {
        return TokenVector::default();
    }
    let mut t = TokenVector::default();
    for c in spec.columns.iter().filter(|c| c.field.is_none()) {
        let t_in = (cfg.template_tokens + ctx_tokens) as f64 + tokens(c.prompt.chars().count() as f64, cfg);
        t += TokenVector::new(t_in.ceil() as u64, INFER_OUTPUT_TOKENS as u64);
    }
    t
}

/// (output rows, added or output row width) of a transform.
fn transform_shape(spec: &TransformSpec, task: TransformTask, n: f64, avg: f64, cfg: &OptimizerConfig) -> (f64, f64) {
    let visible = spec.columns.iter().filter(|c| !c.hidden).count() as f64;
    match task {
        TransformTask::Extract => (n * extracted_rows_per_input(avg, cfg), VALUE_CHARS * visible),
        TransformTask::Synthesize => (if n > 0.0 { 1.0 } else { 0.0 }, VALUE_CHARS * visible),
        _ => (n, VALUE_CHARS * visible),
    }
}

/// Γ per node from its usage, then the plan's terms. The plan must have
/// been annotated; Γ is written back into every node.
pub fn plan_cost(plan: &mut PhysicalPlan, model: &CostModel) -> Result<PlanCost> {
    let lambda = model.config.lambda;
    let mut acc = PlanCost {
        lambda,
        chi_weight: model.config.chi_weight,
        ..PlanCost::default()
    };
    cost_node(plan, model, &mut acc)?;
    acc.total = acc.at_lambda(lambda);
    Ok(acc)
}

fn cost_node(plan: &mut PhysicalPlan, model: &CostModel, acc: &mut PlanCost) -> Result<()> {
    for c in plan.children.iter_mut() {
        cost_node(c, model, acc)?;
    }
    let lambda = model.config.lambda;
    let mut g: Option<Gamma> = None;
    for (m, t) in &plan.ann.usage {
        let one = gamma(model.matrix(m)?, *t, lambda)?;
        let sum = g.get_or_insert(Gamma {
            lambda,
            ..Gamma::default()
        });
        sum.cost += one.cost;
        sum.loss += one.loss;
    }
    if let Some(g) = &g {
        acc.cost_term += g.cost;
        acc.loss_term += g.loss;
    }
    plan.ann.gamma = g;
    acc.chi_sum += plan.ann.chi;
    Ok(())
}

/// Annotates and costs every candidate and picks the argmin; ties go to
/// the smallest plan id. Fails only when no candidate can be costed.
pub fn select_plan(plans: Vec<PhysicalPlan>, model: &CostModel, ctx: &PromptContext) -> Result<Selection> {
    if plans.is_empty() {
        return Err(Error::Cost("no candidate plans".into()));
    }
    let mut keyed: Vec<(String, PhysicalPlan)> = plans.into_iter().map(|p| (p.plan_id(), p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut plans = Vec::with_capacity(keyed.len());
    let mut costs = Vec::with_capacity(keyed.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, mut p)) in keyed.into_iter().enumerate() {
        annotate(&mut p, model, ctx);
        let c = plan_cost(&mut p, model).map_err(|e| e.to_string());
        if let Ok(pc) = &c {
            if best.is_none_or(|(_, b)| pc.total < b) {
                best = Some((i, pc.total));
            }
        }
        plans.push(p);
        costs.push(c);
    }
    match best {
        Some((selected, _)) => Ok(Selection { plans, costs, selected }),
        None => {
            let first = costs
                .iter()
                .find_map(|c| c.as_ref().err().cloned())
                .unwrap_or_default();
            Err(Error::Cost(format!("every candidate plan is degenerate: {first}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physical::TransformTask;
    use crate::plan::{ScanSource, TransformColumn};
    use crate::relation::{Column, DataType, Schema};
    use crate::storage::SourceStats;
    use proptest::prelude::*;

    fn judge_op() -> PhysicalOp {
        PhysicalOp::SemanticFilter {
            predicate: ScalarExpr::Prompt("relevant".into()),
            model: "m".into(),
            batch: 16,
        }
    }

    #[test]
    fn token_estimate_examples() {
        let cfg = OptimizerConfig::default();
        assert_eq!(estimate_tokens(&judge_op(), 0.0, 400.0, 0, &cfg), TokenVector::default());
        let one = estimate_tokens(&judge_op(), 1.0, 400.0, 0, &cfg);
        assert_eq!(one.t_input, 150);
        let ten = estimate_tokens(&judge_op(), 10.0, 400.0, 0, &cfg);
        assert_eq!(ten.t_input, 50 + 10 * 100);
        assert_eq!(ten.t_output, 10 * one.t_output);
        // Context is charged once per request.
        let batched = estimate_tokens(&judge_op(), 20.0, 400.0, 30, &cfg);
        assert_eq!(batched.t_input, 2 * (50 + 30) + 20 * 100);
    }

    fn stats(rows: usize, chars: usize) -> SourceStats {
        SourceStats {
            rows,
            documents: 1,
            total_chars: chars,
        }
    }

    fn table_scan(rows: usize) -> PhysicalPlan {
        let schema = Schema::new(vec![Column::new("v", DataType::Text)]).unwrap();
        PhysicalPlan::new(
            PhysicalOp::TableScan {
                table: "t".into(),
                stats: stats(rows, rows * 40),
            },
            vec![],
            schema,
        )
    }

    fn mapped(model: &str, rows: usize) -> PhysicalPlan {
        let scan = table_scan(rows);
        let spec = TransformSpec {
            mode: TransformMode::Map,
            columns: vec![TransformColumn {
                name: "label".into(),
                field: Some("label".into()),
                prompt: "label it".into(),
                hidden: false,
            }],
            input: Some("v".into()),
        };
        let schema = spec.output_schema(&scan.schema).unwrap();
        PhysicalPlan::new(
            PhysicalOp::SemanticTransform {
                spec,
                task: TransformTask::Map,
                model: model.into(),
            },
            vec![scan],
            schema,
        )
    }

    fn model(lambda: f64) -> CostModel {
        let mut m = BTreeMap::new();
        m.insert("cheap".to_string(), CostMatrix::new(0.0004, 0.0008, 5e-7, 1.5e-6).unwrap());
        m.insert("good".to_string(), CostMatrix::new(0.001, 0.002, 5e-6, 1.5e-5).unwrap());
        CostModel::new(
            OptimizerConfig {
                lambda,
                ..OptimizerConfig::default()
            },
            m,
        )
        .unwrap()
    }

    fn cost_of(mut p: PhysicalPlan, m: &CostModel) -> PlanCost {
        annotate(&mut p, m, &PromptContext::default());
        plan_cost(&mut p, m).unwrap()
    }

    #[test]
    fn classic_plan_is_pure_chi() {
        let m = model(3.0);
        let c = cost_of(table_scan(100), &m);
        assert_eq!((c.cost_term, c.loss_term, c.chi_sum), (0.0, 0.0, 100.0));
        assert!((c.total - 0.01).abs() < 1e-15);
    }

    #[test]
    fn one_semantic_node_at_lambda_zero() {
        let m = model(0.0);
        let mut p = mapped("cheap", 10);
        annotate(&mut p, &m, &PromptContext::default());
        let t = p.ann.usage[0].1;
        let expected = m.matrix("cheap").unwrap().price(t) + 10.0 * m.config.chi_weight;
        let c = plan_cost(&mut p, &m).unwrap();
        assert!((c.total - expected).abs() < 1e-15);
        assert!(p.ann.gamma.is_some() && p.children[0].ann.gamma.is_none());
    }

    #[test]
    fn zero_rows_skip_the_operator() {
        let m = model(5.0);
        let c = cost_of(mapped("cheap", 0), &m);
        assert_eq!((c.cost_term, c.loss_term), (0.0, 0.0));
    }

    #[test]
    fn missing_matrix_is_an_error() {
        let m = model(0.0);
        let mut p = mapped("unknown", 3);
        annotate(&mut p, &m, &PromptContext::default());
        assert!(plan_cost(&mut p, &m).is_err());
        let sel = select_plan(vec![mapped("unknown", 3), mapped("cheap", 3)], &m, &PromptContext::default()).unwrap();
        assert!(sel.chosen().plan_id().contains("model=cheap"));
        assert!(select_plan(vec![mapped("unknown", 3)], &m, &PromptContext::default()).is_err());
    }

    #[test]
    fn selection_switches_once_along_lambda() {
        let ctx = PromptContext::default();
        let base = model(0.0);
        let a = cost_of(mapped("cheap", 10), &base);
        let b = cost_of(mapped("good", 10), &base);
        // The cheap plan wins at λ=0; the accurate one has the smaller loss.
        assert!(a.cost_term < b.cost_term && b.loss_term < a.loss_term);
        let crossover = (b.cost_term - a.cost_term) / (a.loss_term - b.loss_term);
        let mut picks = Vec::new();
        for i in 0..20 {
            let lambda = crossover * 2.0 * i as f64 / 19.0;
            let sel = select_plan(vec![mapped("cheap", 10), mapped("good", 10)], &model(lambda), &ctx).unwrap();
            let expect_good = a.at_lambda(lambda) > b.at_lambda(lambda);
            assert_eq!(sel.chosen().plan_id().contains("model=good"), expect_good, "lambda {lambda}");
            picks.push(expect_good);
        }
        assert_eq!(picks.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }

    #[test]
    fn ties_go_to_smallest_plan_id() {
        let m = model(0.0);
        let sel = select_plan(vec![table_scan(5), table_scan(5)], &m, &PromptContext::default()).unwrap();
        assert_eq!(sel.selected, 0);
        let scan = |name: &str| {
            PhysicalPlan::new(
                PhysicalOp::FileScan {
                    file: name.into(),
                    stats: stats(2, 10),
                },
                vec![],
                Schema::empty(),
            )
        };
        let sel = select_plan(vec![scan("b"), scan("a")], &m, &PromptContext::default()).unwrap();
        assert_eq!(sel.chosen().plan_id(), "FileScan{a}");
    }

    #[test]
    fn semantic_scan_costs_inference() {
        let m = model(0.0);
        let spec = TransformSpec {
            mode: TransformMode::Extract,
            columns: vec![TransformColumn {
                name: "__inferred_0".into(),
                field: None,
                prompt: "research area".into(),
                hidden: false,
            }],
            input: Some("text".into()),
        };
        let p = PhysicalPlan::new(
            PhysicalOp::SemanticScan {
                source: ScanSource::File { name: "f".into() },
                stats: stats(2, 800),
                spec,
                model: "cheap".into(),
            },
            vec![],
            Schema::empty(),
        );
        let mut q = p.clone();
        annotate(&mut q, &m, &PromptContext::default());
        let t = q.ann.usage[0].1;
        // One extraction request (2 chunks fit a batch) plus one inference request.
        let ctx = count_tokens(&PromptContext::default().digest());
        assert_eq!(t.t_input, (50 + ctx + 200) + (50 + ctx + 4));
        assert!(q.ann.rows >= 2.0);
    }

    proptest! {
        #[test]
        fn plan_totals_are_affine_in_lambda(rows in 1usize..200, l1 in 0f64..5.0) {
            let c0 = cost_of(mapped("good", rows), &model(0.0));
            let c1 = cost_of(mapped("good", rows), &model(l1));
            let c2 = cost_of(mapped("good", rows), &model(2.0 * l1));
            prop_assert!(((c2.total - c1.total) - (c1.total - c0.total)).abs() < 1e-9);
        }

        #[test]
        fn raising_prices_never_lowers_a_plan(rows in 1usize..200, bump in 0f64..1e-3, lambda in 0f64..10.0) {
            let lo = model(lambda);
            let mut hi = lo.clone();
            let e = hi.matrices.get_mut("good").unwrap();
            e.c_input += bump;
            e.c_output += bump;
            prop_assert!(cost_of(mapped("good", rows), &hi).total >= cost_of(mapped("good", rows), &lo).total);
        }
    }
}
