use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn semsql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsql"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn script(dir: &Path, text: &str) -> String {
    let p = dir.join("script.sql");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_script_exits_zero_silently() {
    let dir = tempfile::tempdir().unwrap();
    let o = semsql(&["-f", &script(dir.path(), "")]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty() && o.stderr.is_empty());
}

#[test]
fn syntax_error_reports_script_position() {
    let dir = tempfile::tempdir().unwrap();
    let o = semsql(&["-f", &script(dir.path(), "CREATE TABLE t (a TEXT);\n\nSELECT a FRM t;\n")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("syntax error at 3:14"), "{}", stderr(&o));
    // the statement before the error still ran
    assert!(String::from_utf8_lossy(&o.stdout).contains("CREATE TABLE t"));
}

#[test]
fn unterminated_statement_is_a_syntax_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = semsql(&["-f", &script(dir.path(), "CREATE TABLE t (a TEXT)")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("syntax error"), "{}", stderr(&o));
}

#[test]
fn feedback_on_classic_query_warns() {
    let dir = tempfile::tempdir().unwrap();
    let text = "CREATE TABLE t (a TEXT);\nINSERT INTO t VALUES ('x');\nSELECT a FROM t;\n\\feedback 0.3\n";
    let o = semsql(&["-f", &script(dir.path(), text)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("used no model"), "{}", stderr(&o));
}

#[test]
fn missing_fixture_dir_is_a_config_error() {
    let o = semsql(&["--fixtures", "/nonexistent/fixtures", "-c", "SELECT a FROM t"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn statement_c_writes_count_area_csv() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus/neurips_2024.txt");
    let text = format!(
        "\\register file neurips_2024.txt {}\n{}\n",
        corpus.display(),
        r#"SELECT count(area), SEM_GROUP(title, "Area of publications", 5) as area FROM TABULAR(PROMPT("title of the paper") as title FROM FILE("neurips_2024.txt")) GROUP BY area;"#
    );
    let out = dir.path().join("out.csv");
    let mock = fixtures().join("mock");
    let o = semsql(&[
        "--fixtures",
        mock.to_str().unwrap(),
        "--format",
        "csv",
        "--output",
        out.to_str().unwrap(),
        "-f",
        &script(dir.path(), &text),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("count,area"));
    let counts: Vec<u32> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(counts.len(), 5);
    assert_eq!(counts.iter().sum::<u32>(), 10);
}

#[test]
fn scenario_output_matches_golden() {
    let mock = fixtures().join("mock");
    let sql = fixtures().join("scenario.sql");
    let o = semsql(&["--fixtures", mock.to_str().unwrap(), "-f", sql.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stderr.is_empty(), "{}", stderr(&o));
    let golden = std::fs::read_to_string(fixtures().join("golden/scenario.out")).unwrap();
    let out = String::from_utf8(o.stdout).unwrap();
    if out != golden {
        let line = out.lines().zip(golden.lines()).position(|(a, b)| a != b);
        panic!("output differs from golden/scenario.out at line {:?}", line.map(|n| n + 1));
    }
}

#[test]
fn example_http_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/http.example.conf");
    let cfg = semsql_cli::config::SessionConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.roster.completion_ids(), vec!["llm-small".to_string(), "llm-large".to_string()]);
    assert_eq!(cfg.roster.validator_id(), Some("llm-validator"));
}
