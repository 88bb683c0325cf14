//! One user's connection to the engine: parse, plan, select, execute, and
//! feed results back into calibration.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::calibration::{CalibrationRecord, Calibrator, CrossValidation, DEFAULT_ALPHA, DEFAULT_SAMPLE_FRACTION};
use crate::cost::{select_plan, CostModel, OptimizerConfig, PlanCost, Selection};
use crate::error::{Error, Result};
use crate::exec::{execute, ExecConfig, ExecutionMetrics};
use crate::gateway::{Gateway, RequestKind};
use crate::physical::{enumerate_plans, PhysicalPlan, PlannerConfig};
use crate::plan::{bind::bind, build_logical_plan, PromptContext};
use crate::relation::{Relation, Value};
use crate::sql::ast::Statement;
use crate::storage::{schema_from_defs, Catalog};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub optimizer: OptimizerConfig,
    pub planner: PlannerConfig,
    pub exec: ExecConfig,
    pub calibration_alpha: f64,
    pub sample_fraction: f64,
    pub calibration_seed: u64,
    /// Queries kept for feedback and replay.
    pub query_log_retention: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            optimizer: OptimizerConfig::default(),
            planner: PlannerConfig::default(),
            exec: ExecConfig::default(),
            calibration_alpha: DEFAULT_ALPHA,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            calibration_seed: 11,
            query_log_retention: 100,
        }
    }
}

/// Per-statement overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryOptions {
    /// Execute this candidate instead of the optimizer's choice.
    pub plan_id: Option<String>,
    /// Trade-off for this statement only; the session value otherwise.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub query_id: String,
    pub relation: Relation,
    /// The executed plan with its estimates.
    pub plan: PhysicalPlan,
    pub cost: Option<PlanCost>,
    pub metrics: ExecutionMetrics,
}

#[derive(Debug, Clone)]
pub enum StatementOutcome {
    Created { table: String },
    Inserted { table: String, rows: usize },
    Query(Box<QueryResult>),
}

/// A SELECT planned but not yet executed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub context: PromptContext,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq)]
struct LoggedQuery {
    query_id: String,
    /// (ledger operator tag, model id) of every model call.
    served: Vec<(String, String)>,
}

pub struct Session {
    catalog: Catalog,
    gateway: Gateway,
    pub options: SessionOptions,
    calibrator: Calibrator,
    log: VecDeque<LoggedQuery>,
    next_query: u64,
}

impl Session {
    /// Loads calibration state from the catalog's data directory when it
    /// has one.
    pub fn new(catalog: Catalog, gateway: Gateway, mut options: SessionOptions) -> Result<Session> {
        let calibrator = match catalog.root() {
            Some(root) => Calibrator::load(root, options.calibration_alpha)?,
            None => Calibrator::new(options.calibration_alpha),
        };
        let completion = gateway.roster().completion_ids();
        if !completion.is_empty() {
            options.planner.completion_models = completion;
        }
        if let Some(e) = gateway.roster().embedding_id() {
            options.planner.embedding_model = e.to_string();
        }
        Ok(Session {
            catalog,
            gateway,
            options,
            calibrator,
            log: VecDeque::new(),
            next_query: 1,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_mut(&mut self) -> &mut Catalog {
        &mut self.catalog
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn calibrator(&self) -> &Calibrator {
        &self.calibrator
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        let mut cfg = self.options.optimizer.clone();
        cfg.lambda = lambda;
        cfg.validate()?;
        self.options.optimizer = cfg;
        Ok(())
    }

    /// Cost model over the calibrated matrices.
    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(self.options.optimizer.clone(), self.calibrator.matrices(self.gateway.roster()))
    }

    pub fn last_query_id(&self) -> Option<&str> {
        self.log.back().map(|q| q.query_id.as_str())
    }

    /// Enumerates and costs the candidates of a SELECT.
    pub fn prepare(&self, sql: &str) -> Result<Prepared> {
        let stmt = crate::sql::parse(sql)?;
        self.prepare_statement(&stmt, sql, None)
    }

    fn prepare_statement(&self, stmt: &Statement, sql: &str, lambda: Option<f64>) -> Result<Prepared> {
        let bound = bind(stmt, sql, &self.catalog)?;
        let logical = build_logical_plan(&bound)?;
        let mut planner = self.options.planner.clone();
        planner.max_plans = self.options.optimizer.max_plans;
        let plans = enumerate_plans(&logical, &planner)?;
        let mut optimizer = self.options.optimizer.clone();
        if let Some(l) = lambda {
            optimizer.lambda = l;
            optimizer.validate()?;
        }
        let model = CostModel::new(optimizer, self.calibrator.matrices(self.gateway.roster()))?;
        let selection = select_plan(plans, &model, &bound.context)?;
        Ok(Prepared {
            context: bound.context,
            selection,
        })
    }

    /// Candidate plans with cost breakdowns; the chosen one is marked
    /// SELECTED.
    pub fn explain(&self, sql: &str) -> Result<String> {
        let p = self.prepare(sql)?;
        Ok(render_selection(&p.selection))
    }

    pub fn execute(&mut self, sql: &str) -> Result<StatementOutcome> {
        self.execute_with(sql, &QueryOptions::default())
    }

    pub fn execute_with(&mut self, sql: &str, opts: &QueryOptions) -> Result<StatementOutcome> {
        let stmt = crate::sql::parse(sql)?;
        match &stmt {
            Statement::CreateTable(c) => {
                let schema = schema_from_defs(&c.columns)?;
                self.catalog.create_table(&c.name, schema)?;
                Ok(StatementOutcome::Created { table: c.name.clone() })
            }
            Statement::Insert(ins) => {
                let rows = self.insert_rows(ins)?;
                let n = self.catalog.insert_rows(&ins.table, rows)?;
                Ok(StatementOutcome::Inserted {
                    table: ins.table.clone(),
                    rows: n,
                })
            }
            Statement::Select(_) => {
                let p = self.prepare_statement(&stmt, sql, opts.lambda)?;
                let (plan, cost) = match &opts.plan_id {
                    None => {
                        let cost = p.selection.costs[p.selection.selected].clone().ok();
                        (p.selection.chosen().clone(), cost)
                    }
                    Some(id) => {
                        let i = p
                            .selection
                            .plans
                            .iter()
                            .position(|x| &x.plan_id() == id)
                            .ok_or_else(|| Error::Plan(format!("no candidate plan with id {id}")))?;
                        (p.selection.plans[i].clone(), p.selection.costs[i].clone().ok())
                    }
                };
                let r = self.run_plan(plan, cost, &p.context)?;
                Ok(StatementOutcome::Query(Box::new(r)))
            }
        }
    }

    /// Executes one plan under a fresh query id.
    pub fn run_plan(&mut self, plan: PhysicalPlan, cost: Option<PlanCost>, ctx: &PromptContext) -> Result<QueryResult> {
        let query_id = format!("q{}", self.next_query);
        self.next_query += 1;
        let (relation, metrics) = execute(&plan, ctx, &self.gateway, &self.catalog, &query_id, &self.options.exec)?;
        let mut served = Vec::new();
        for e in metrics.ledger.entries() {
            let pair = (e.operator.clone(), e.model_id.clone());
            if e.kind != RequestKind::Embedding && !served.contains(&pair) {
                served.push(pair);
            }
        }
        self.log.push_back(LoggedQuery {
            query_id: query_id.clone(),
            served,
        });
        while self.log.len() > self.options.query_log_retention.max(1) {
            self.log.pop_front();
        }
        if self.catalog.root().is_some() {
            self.catalog.flush_embeddings()?;
        }
        Ok(QueryResult {
            query_id,
            relation,
            plan,
            cost,
            metrics,
        })
    }

    fn insert_rows(&self, ins: &crate::sql::ast::Insert) -> Result<Vec<Vec<Value>>> {
        let schema = self.catalog.table_schema(&ins.table)?.clone();
        let positions: Vec<usize> = if ins.columns.is_empty() {
            (0..schema.len()).collect()
        } else {
            ins.columns
                .iter()
                .map(|c| {
                    schema
                        .index_of(c)
                        .ok_or_else(|| Error::Bind(format!("table '{}' has no column '{c}'", ins.table)))
                })
                .collect::<Result<_>>()?
        };
        let mut rows = Vec::with_capacity(ins.rows.len());
        for exprs in &ins.rows {
            if exprs.len() != positions.len() {
                return Err(Error::Bind(format!(
                    "INSERT row has {} values for {} columns",
                    exprs.len(),
                    positions.len()
                )));
            }
            let mut row = vec![Value::Null; schema.len()];
            for (e, pos) in exprs.iter().zip(&positions) {
                let bound = crate::plan::bind::scalar(e, &|c| {
                    Err(Error::Bind(format!("INSERT values cannot reference column '{}'", c.name)))
                })?;
                row[*pos] = bound.eval_with(&|_| None)?;
            }
            rows.push(row);
        }
        Ok(rows)
    }

    fn logged(&self, query_id: &str) -> Result<&LoggedQuery> {
        self.log
            .iter()
            .find(|q| q.query_id == query_id)
            .ok_or_else(|| Error::Calibration(format!("unknown query id '{query_id}'")))
    }

    fn persist_calibration(&self) -> Result<()> {
        match self.catalog.root() {
            Some(root) => self.calibrator.save(root),
            None => Ok(()),
        }
    }

    /// User feedback for a query. A query that used no model yields no
    /// records.
    pub fn feedback(&mut self, query_id: &str, score: f64) -> Result<Vec<CalibrationRecord>> {
        let served = self.logged(query_id)?.served.clone();
        let records = self.calibrator.user_feedback(self.gateway.roster(), query_id, score, &served)?;
        self.persist_calibration()?;
        Ok(records)
    }

    /// Model-based cross-validation of a query against `validator`.
    pub fn calibrate(&mut self, query_id: &str, validator: &str) -> Result<Option<CrossValidation>> {
        self.logged(query_id)?;
        let out = self.calibrator.cross_validate(
            &self.gateway,
            query_id,
            validator,
            self.options.sample_fraction,
            self.options.calibration_seed,
        )?;
        self.persist_calibration()?;
        Ok(out)
    }
}

/// Text form of a selection: one block per candidate in plan-id order.
pub fn render_selection(sel: &Selection) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} candidate plans", sel.plans.len());
    for (i, (p, c)) in sel.plans.iter().zip(&sel.costs).enumerate() {
        let mark = if i == sel.selected { " SELECTED" } else { "" };
        match c {
            Ok(c) => {
                let _ = writeln!(
                    out,
                    "plan {} id={}{mark}: total={:.8} cost={:.8} loss={:.8} chi={} lambda={}",
                    i + 1,
                    p.plan_id(),
                    c.total,
                    c.cost_term,
                    c.loss_term,
                    crate::relation::format_number(c.chi_sum),
                    crate::relation::format_number(c.lambda),
                );
            }
            Err(e) => {
                let _ = writeln!(out, "plan {} id={}: not costed: {e}", i + 1, p.plan_id());
            }
        }
        for line in p.explain().lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    out
}
