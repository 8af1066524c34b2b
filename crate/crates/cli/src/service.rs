use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use skyfed_core::archive_node::{Document, ServiceError, QUOTA};
use skyfed_core::workspace::{JobRecord, JobState};
use skyfed_server::client::{join, Client, HttpResponse, Method};

use crate::config::CliConfig;
use crate::{emit, read_file, CliError, Command, Format, JobCommand, MydbCommand, RegistryCommand, Target};

const POLL_INTERVAL: Duration = Duration::from_millis(100);

struct Session<'a> {
    cfg: &'a CliConfig,
    client: Client,
}

type Params = Vec<(&'static str, String)>;

impl Session<'_> {
    fn portal(&self) -> Result<&str, CliError> {
        self.cfg
            .portal
            .as_deref()
            .ok_or_else(|| CliError::Usage("no portal configured; use --portal or SKYFED_PORTAL".into()))
    }

    fn portal_url(&self, path: &str) -> Result<String, CliError> {
        Ok(join(self.portal()?, path))
    }

    fn me(&self) -> Result<String, CliError> {
        self.cfg
            .credentials
            .as_ref()
            .map(|c| c.user.clone())
            .ok_or_else(|| CliError::Usage("this command needs --user and --secret".into()))
    }

    fn tier(&self) -> (&'static str, String) {
        ("tier", self.cfg.tier.name().to_string())
    }

    fn call(&self, method: Method, url: &str, params: &[(&str, String)], body: Option<(&[u8], &str)>) -> Result<HttpResponse, CliError> {
        let resp = self.client.request(method, url, params, body, None)?;
        if !resp.is_success() {
            return Err(resp.service_error().into());
        }
        Ok(resp)
    }

    /// A JSON call, printed pretty.
    fn json(&self, method: Method, url: &str, body: Option<serde_json::Value>, out: &mut dyn Write) -> Result<(), CliError> {
        let text = body.map(|b| b.to_string());
        let resp = self.call(method, url, &[], text.as_ref().map(|t| (t.as_bytes(), "application/json")))?;
        let value: serde_json::Value = resp.json()?;
        print_json(&value, out)
    }

    /// A call returning a table, written in `format`.
    #[allow(clippy::too_many_arguments)]
    fn table(
        &self,
        method: Method,
        url: &str,
        mut params: Params,
        body: Option<(&[u8], &str)>,
        format: Format,
        path: Option<&Path>,
        out: &mut dyn Write,
    ) -> Result<(), CliError> {
        let wire = if format == Format::Xml { "xml" } else { "json" };
        params.push(("format", wire.to_string()));
        let resp = self.call(method, url, &params, body)?;
        let bytes = match format {
            Format::Csv => match resp.document() {
                Document::Table(t) => t.to_csv().into_bytes(),
                Document::Error(e) => return Err(CliError::Service(e.into())),
            },
            _ => resp.body,
        };
        emit(path, &bytes, out)
    }

    /// The URL for `path` on the archive named by `target`, with any
    /// routing parameter the portal needs.
    fn archive_url(&self, target: &Target, path: &str) -> Result<(String, Params), CliError> {
        if let Some(e) = &target.endpoint {
            skyfed_core::federation::validate_endpoint(e).map_err(|e| CliError::Usage(e.to_string()))?;
            return Ok((join(e, path), Vec::new()));
        }
        let archives = &self.cfg.archives;
        let name = target.archive.clone().or_else(|| self.cfg.default_archive.clone()).or_else(|| {
            (archives.len() == 1).then(|| archives.keys().next().cloned()).flatten()
        });
        let name = match name {
            Some(n) => n,
            None => self.sole_registered()?,
        };
        match archives.get(&name) {
            Some(endpoint) => Ok((join(endpoint, path), Vec::new())),
            None => Ok((self.portal_url(path)?, vec![("archive", name)])),
        }
    }

    /// The portal's only registered archive, for commands that name none.
    fn sole_registered(&self) -> Result<String, CliError> {
        let none = || CliError::Usage("no archive named; use --archive or --endpoint".into());
        if self.cfg.portal.is_none() {
            return Err(none());
        }
        let resp = self.call(Method::Get, &self.portal_url("registry/list")?, &[], None)?;
        let records: Vec<serde_json::Value> = resp.json()?;
        match records.as_slice() {
            [only] => only["name"].as_str().map(str::to_string).ok_or_else(none),
            _ => Err(none()),
        }
    }

    fn job(&self, id: u64) -> Result<JobRecord, CliError> {
        let resp = self.call(Method::Get, &self.portal_url(&format!("jobs/{id}"))?, &[], None)?;
        Ok(resp.json()?)
    }
}

fn print_json(value: &impl serde::Serialize, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    emit(None, text.as_bytes(), out)
}

fn query_body(text: Option<String>, file: Option<&Path>) -> Result<String, CliError> {
    match (text, file) {
        (Some(t), _) => Ok(t),
        (None, Some(f)) => read_file(f),
        (None, None) => Err(CliError::Usage("give the query text or --file".into())),
    }
}

pub fn run(cfg: &CliConfig, command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let s = Session { cfg, client: Client::new(cfg.credentials.clone()) };
    match command {
        Command::Cone { ra, dec, sr, target, table, format, out: path } => {
            let (url, mut params) = s.archive_url(&target, "cone")?;
            params.extend([("ra", ra.to_string()), ("dec", dec.to_string()), ("sr", sr.to_string()), s.tier()]);
            params.extend(table.map(|t| ("table", t)));
            s.table(Method::Get, &url, params, None, format, path.as_deref(), out)
        }
        Command::Cutout { ra, dec, width, height, scale, table, band, target, out: path } => {
            let (url, mut params) = s.archive_url(&target, "cutout")?;
            params.extend([("ra", ra.to_string()), ("dec", dec.to_string())]);
            params.extend(width.map(|w| ("width", w.to_string())));
            params.extend(height.map(|h| ("height", h.to_string())));
            params.extend(scale.map(|v| ("scale", v.to_string())));
            params.extend(table.map(|t| ("table", t)));
            params.extend(band.map(|b| ("band", b)));
            let resp = s.call(Method::Get, &url, &params, None)?;
            emit(Some(&path), &resp.body, out)
        }
        Command::Query { text, file, endpoint, format, out: path } => {
            let q = query_body(text, file.as_deref())?;
            let url = match endpoint {
                Some(e) => {
                    skyfed_core::federation::validate_endpoint(&e).map_err(|e| CliError::Usage(e.to_string()))?;
                    join(&e, "query")
                }
                None => s.portal_url("query")?,
            };
            s.table(Method::Post, &url, vec![s.tier()], Some((q.as_bytes(), "text/plain")), format, path.as_deref(), out)
        }
        Command::Xmatch { sources, tolerance_arcsec, ra, dec, sr, format, out: path } => {
            let mut body = serde_json::json!({ "sources": sources });
            if let Some(t) = tolerance_arcsec {
                body["tolerance_arcsec"] = t.into();
            }
            if let (Some(ra), Some(dec), Some(sr)) = (ra, dec, sr) {
                body["region"] = serde_json::json!({ "ra": ra, "dec": dec, "sr": sr });
            }
            let text = body.to_string();
            let url = s.portal_url("xmatch")?;
            s.table(Method::Post, &url, vec![s.tier()], Some((text.as_bytes(), "application/json")), format, path.as_deref(), out)
        }
        Command::Job(j) => job(&s, j, out, err),
        Command::Mydb(m) => mydb(&s, m, out),
        Command::Registry(r) => registry(&s, r, out),
        Command::Load { .. } | Command::Synth { .. } | Command::Pyramid { .. } | Command::Capacity { .. } | Command::Bench(_) => {
            unreachable!("local commands are dispatched before service commands")
        }
    }
}

fn job(s: &Session, command: JobCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    s.me()?;
    match command {
        JobCommand::Submit { query, query_file } => {
            let q = query_body(query, query_file.as_deref())?;
            let body = serde_json::json!({ "query": q, "tier": s.cfg.tier.name() });
            s.json(Method::Post, &s.portal_url("jobs/submit")?, Some(body), out)
        }
        JobCommand::Status { id, wait, timeout } => {
            let mut rec = s.job(id)?;
            if wait {
                let deadline = Instant::now() + Duration::from_secs_f64(timeout.max(0.0));
                while !rec.state.is_terminal() {
                    if Instant::now() >= deadline {
                        print_json(&rec, out)?;
                        return Err(CliError::Transport(format!("job {id} still {} after {timeout} s", rec.state)));
                    }
                    std::thread::sleep(POLL_INTERVAL);
                    rec = s.job(id)?;
                }
            }
            print_json(&rec, out)?;
            if !wait {
                return Ok(());
            }
            let detail = || rec.error.clone().unwrap_or_else(|| rec.state.to_string());
            match rec.state {
                JobState::QuotaExceeded => {
                    let _ = writeln!(err, "job {id} exceeded its quota; `skyfed job rerun {id}` doubles it");
                    Err(ServiceError::new(QUOTA, detail()).into())
                }
                JobState::Failed | JobState::Cancelled => Err(ServiceError::new(rec.state.name(), detail()).into()),
                _ => Ok(()),
            }
        }
        JobCommand::Rerun { id } => s.json(Method::Post, &s.portal_url(&format!("jobs/{id}/rerun"))?, None, out),
        JobCommand::Cancel { id } => s.json(Method::Post, &s.portal_url(&format!("jobs/{id}/cancel"))?, None, out),
        JobCommand::Fetch { id, format, out: path } => {
            let url = s.portal_url(&format!("jobs/{id}/result"))?;
            s.table(Method::Get, &url, Vec::new(), None, format, path.as_deref(), out)
        }
        JobCommand::List { state } => {
            let params: Vec<(&str, String)> = state.map(|st| ("state", st)).into_iter().collect();
            let resp = s.call(Method::Get, &s.portal_url("jobs")?, &params, None)?;
            let value: serde_json::Value = resp.json()?;
            print_json(&value, out)
        }
    }
}

fn mydb(s: &Session, command: MydbCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let me = s.me()?;
    let owner_of = |o: Option<String>| o.unwrap_or_else(|| me.clone());
    match command {
        MydbCommand::Create => s.json(Method::Post, &s.portal_url("mydb/create")?, None, out),
        MydbCommand::List => s.json(Method::Get, &s.portal_url("mydb")?, None, out),
        MydbCommand::Info { owner } => s.json(Method::Get, &s.portal_url(&format!("mydb/{}", owner_of(owner)))?, None, out),
        MydbCommand::Upload { name, csv, owner } => {
            let body = read_file(&csv)?;
            let url = s.portal_url(&format!("mydb/{}/tables/{name}", owner_of(owner)))?;
            let resp = s.call(Method::Post, &url, &[], Some((body.as_bytes(), "text/csv")))?;
            let value: serde_json::Value = resp.json()?;
            print_json(&value, out)
        }
        MydbCommand::Fetch { name, owner, format, out: path } => {
            let url = s.portal_url(&format!("mydb/{}/tables/{name}", owner_of(owner)))?;
            s.table(Method::Get, &url, Vec::new(), None, format, path.as_deref(), out)
        }
        MydbCommand::Grant { user, level } => {
            let body = serde_json::json!({ "user": user, "level": level });
            s.json(Method::Post, &s.portal_url(&format!("mydb/{me}/grant"))?, Some(body), out)
        }
        MydbCommand::Drop { name, owner } => {
            s.json(Method::Delete, &s.portal_url(&format!("mydb/{}/tables/{name}", owner_of(owner)))?, None, out)
        }
    }
}

fn registry(s: &Session, command: RegistryCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        RegistryCommand::Register { name, endpoint } => {
            skyfed_core::federation::validate_endpoint(&endpoint).map_err(|e| CliError::Usage(e.to_string()))?;
            let body = serde_json::json!({ "name": name, "endpoint": endpoint });
            s.json(Method::Post, &s.portal_url("registry/register")?, Some(body), out)
        }
        RegistryCommand::List => s.json(Method::Get, &s.portal_url("registry/list")?, None, out),
        RegistryCommand::Find { name } => {
            let resp = s.call(Method::Get, &s.portal_url("registry/find")?, &[("name", name)], None)?;
            let value: serde_json::Value = resp.json()?;
            print_json(&value, out)
        }
        RegistryCommand::Remove { name } => s.json(Method::Delete, &s.portal_url(&format!("registry/{name}"))?, None, out),
        RegistryCommand::Refresh { name } => {
            s.json(Method::Post, &s.portal_url(&format!("registry/{name}/refresh"))?, None, out)
        }
    }
}
