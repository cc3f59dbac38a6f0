use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ControlError;
use crate::data_io::{SinkSpec, SourceSpec};
use crate::registry::{ParamMap, Registry};

/// The analysis half of a `<KPIs, analysis>` request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub name: String,
    #[serde(default)]
    pub params: ParamMap,
}

/// Operator request: analyze every KPI in `kpis` with `analysis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRequest {
    pub kpis: Vec<String>,
    pub analysis: AnalysisRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink: Option<SinkSpec>,
}

/// Full desired-state document, as accepted by `POST /desired-state` and `adaas apply`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DesiredStateDocument {
    #[serde(default)]
    pub requests: Vec<DetectionRequest>,
}

/// Source and sink used when a request leaves them out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Defaults {
    #[serde(default)]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub sink: Option<SinkSpec>,
}

/// One deployable detector. Its id is a digest of every other field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub detector_id: String,
    pub kpi: String,
    pub analysis_name: String,
    pub params: ParamMap,
    pub source: SourceSpec,
    pub sink: SinkSpec,
}

#[derive(Serialize)]
struct IdMaterial<'a> {
    kpi: &'a str,
    analysis: &'a str,
    params: &'a ParamMap,
    source: &'a SourceSpec,
    sink: &'a SinkSpec,
}

pub fn detector_id(
    kpi: &str,
    analysis: &str,
    params: &ParamMap,
    source: &SourceSpec,
    sink: &SinkSpec,
) -> String {
    let material = serde_json::to_vec(&IdMaterial {
        kpi,
        analysis,
        params,
        source,
        sink,
    })
    .expect("id material serializes");
    let digest = Sha256::digest(&material);
    format!("det-{}", hex::encode(&digest[..8]))
}

impl DetectorSpec {
    pub fn new(
        kpi: impl Into<String>,
        analysis_name: impl Into<String>,
        params: ParamMap,
        source: SourceSpec,
        sink: SinkSpec,
    ) -> Self {
        let kpi = kpi.into();
        let analysis_name = analysis_name.into();
        let detector_id = detector_id(&kpi, &analysis_name, &params, &source, &sink);
        Self {
            detector_id,
            kpi,
            analysis_name,
            params,
            source,
            sink,
        }
    }

    pub fn has_valid_id(&self) -> bool {
        self.detector_id
            == detector_id(
                &self.kpi,
                &self.analysis_name,
                &self.params,
                &self.source,
                &self.sink,
            )
    }
}

/// Expand a request into one detector per KPI.
pub fn expand_request(
    registry: &Registry,
    req: &DetectionRequest,
    defaults: &Defaults,
) -> Result<Vec<DetectorSpec>, ControlError> {
    if req.kpis.is_empty() {
        return Err(ControlError::Validation("request has no kpis".into()));
    }
    if let Some(k) = req.kpis.iter().find(|k| k.is_empty()) {
        return Err(ControlError::Validation(format!("empty kpi name in {k:?}")));
    }
    let meta = registry.resolve(&req.analysis.name)?;
    let params = meta.validate_params(&req.analysis.params)?;
    let source = req
        .source
        .clone()
        .or_else(|| defaults.source.clone())
        .ok_or_else(|| ControlError::Validation("no source given and no default source".into()))?;
    source
        .validate()
        .map_err(|e| ControlError::Validation(e.to_string()))?;
    let sink = req
        .sink
        .clone()
        .or_else(|| defaults.sink.clone())
        .ok_or_else(|| ControlError::Validation("no sink given and no default sink".into()))?;
    let mut out: Vec<DetectorSpec> = Vec::with_capacity(req.kpis.len());
    for kpi in &req.kpis {
        let spec = DetectorSpec::new(
            kpi.clone(),
            meta.analysis_name.clone(),
            params.clone(),
            source.clone(),
            sink.clone(),
        );
        if !out.iter().any(|s| s.detector_id == spec.detector_id) {
            out.push(spec);
        }
    }
    Ok(out)
}

/// Set of detectors that should be deployed, keyed by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesiredState {
    detectors: BTreeMap<String, DetectorSpec>,
}

impl DesiredState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from specs; identical specs collapse, and every id must match its content.
    pub fn from_specs(specs: impl IntoIterator<Item = DetectorSpec>) -> Result<Self, ControlError> {
        let mut s = Self::new();
        for spec in specs {
            s.insert(spec)?;
        }
        Ok(s)
    }

    pub fn from_document(
        registry: &Registry,
        doc: &DesiredStateDocument,
        defaults: &Defaults,
    ) -> Result<Self, ControlError> {
        let mut s = Self::new();
        for req in &doc.requests {
            for spec in expand_request(registry, req, defaults)? {
                s.insert(spec)?;
            }
        }
        Ok(s)
    }

    pub fn insert(&mut self, spec: DetectorSpec) -> Result<bool, ControlError> {
        if !spec.has_valid_id() {
            return Err(ControlError::Validation(format!(
                "detector id {} does not match its content",
                spec.detector_id
            )));
        }
        Ok(self.detectors.insert(spec.detector_id.clone(), spec).is_none())
    }

    pub fn remove(&mut self, id: &str) -> Option<DetectorSpec> {
        self.detectors.remove(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.detectors.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&DetectorSpec> {
        self.detectors.get(id)
    }

    pub fn specs(&self) -> impl Iterator<Item = &DetectorSpec> {
        self.detectors.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct DesiredStateRepr {
    detectors: Vec<DetectorSpec>,
}

impl Serialize for DesiredState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DesiredStateRepr {
            detectors: self.detectors.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DesiredState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = DesiredStateRepr::deserialize(d)?;
        DesiredState::from_specs(repr.detectors).map_err(serde::de::Error::custom)
    }
}

/// Delta between desired and actual deployments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChangeSet {
    pub to_deploy: Vec<DetectorSpec>,
    pub to_undeploy: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.to_deploy.is_empty() && self.to_undeploy.is_empty()
    }
}

/// `to_deploy = desired \ actual`, `to_undeploy = actual \ desired`, compared by id.
pub fn compute_changeset<'a>(
    desired: &DesiredState,
    actual: impl IntoIterator<Item = &'a DetectorSpec>,
) -> ChangeSet {
    let actual: BTreeMap<&str, &DetectorSpec> = actual
        .into_iter()
        .map(|s| (s.detector_id.as_str(), s))
        .collect();
    ChangeSet {
        to_deploy: desired
            .specs()
            .filter(|s| !actual.contains_key(s.detector_id.as_str()))
            .cloned()
            .collect(),
        to_undeploy: actual
            .keys()
            .filter(|id| !desired.contains(id))
            .map(|id| id.to_string())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn src() -> SourceSpec {
        SourceSpec::CsvFile {
            path: "in.csv".into(),
        }
    }

    fn sink() -> SinkSpec {
        SinkSpec::JsonLinesFile {
            path: "out.jsonl".into(),
        }
    }

    fn req(kpis: &[&str], analysis: &str, params: serde_json::Value) -> DetectionRequest {
        DetectionRequest {
            kpis: kpis.iter().map(|s| s.to_string()).collect(),
            analysis: AnalysisRequest {
                name: analysis.into(),
                params: serde_json::from_value(params).unwrap(),
            },
            source: Some(src()),
            sink: Some(sink()),
        }
    }

    fn spec(kpi: &str) -> DetectorSpec {
        expand_request(
            &Registry::with_builtins(),
            &req(&[kpi], "sigma_limit", json!({"window_size": 10})),
            &Defaults::default(),
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn expand_one_spec_per_kpi() {
        let r = Registry::with_builtins();
        let specs = expand_request(
            &r,
            &req(&["cpu", "mem"], "sigma_limit", json!({"window_size": 10})),
            &Defaults::default(),
        )
        .unwrap();
        assert_eq!(specs.len(), 2);
        assert_ne!(specs[0].detector_id, specs[1].detector_id);
        assert_eq!(specs[0].params["sigma"], json!(3.0));
        let again = expand_request(
            &r,
            &req(&["cpu", "mem"], "sigma_limit", json!({"window_size": 10})),
            &Defaults::default(),
        )
        .unwrap();
        assert_eq!(specs, again);
    }

    #[test]
    fn expand_errors() {
        let r = Registry::with_builtins();
        let d = Defaults::default();
        assert!(matches!(
            expand_request(&r, &req(&["cpu"], "htm", json!({})), &d),
            Err(ControlError::Registry(_))
        ));
        assert!(matches!(
            expand_request(&r, &req(&[], "sigma_limit", json!({"window_size": 10})), &d),
            Err(ControlError::Validation(_))
        ));
        let mut no_src = req(&["cpu"], "sigma_limit", json!({"window_size": 10}));
        no_src.source = None;
        assert!(expand_request(&r, &no_src, &d).is_err());
        let d = Defaults {
            source: Some(src()),
            sink: None,
        };
        assert!(expand_request(&r, &no_src, &d).is_ok());
    }

    #[test]
    fn id_ignores_param_key_order() {
        let a: ParamMap =
            serde_json::from_str(r#"{"window_size":10,"sigma":2.5}"#).unwrap();
        let b: ParamMap =
            serde_json::from_str(r#"{"sigma":2.5,"window_size":10}"#).unwrap();
        assert_eq!(
            detector_id("cpu", "sigma_limit", &a, &src(), &sink()),
            detector_id("cpu", "sigma_limit", &b, &src(), &sink())
        );
    }

    #[test]
    fn changeset_examples() {
        let (a, b, c) = (spec("a"), spec("b"), spec("c"));
        let ab = DesiredState::from_specs([a.clone(), b.clone()]).unwrap();
        assert!(compute_changeset(&ab, [&a, &b]).is_empty());
        let cs = compute_changeset(&ab, [&b, &c]);
        assert_eq!(cs.to_deploy, vec![a.clone()]);
        assert_eq!(cs.to_undeploy, vec![c.detector_id.clone()]);
        let cs = compute_changeset(&DesiredState::new(), [&a]);
        assert!(cs.to_deploy.is_empty());
        assert_eq!(cs.to_undeploy, vec![a.detector_id.clone()]);
    }

    #[test]
    fn desired_state_rejects_forged_ids() {
        let mut s = spec("a");
        s.kpi = "b".into();
        assert!(DesiredState::from_specs([s]).is_err());
    }

    #[test]
    fn desired_state_json_round_trip() {
        let d = DesiredState::from_specs([spec("x"), spec("y")]).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: DesiredState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #[test]
        fn changeset_lists_are_disjoint(desired in proptest::collection::btree_set(0u8..12, 0..12),
                                        actual in proptest::collection::btree_set(0u8..12, 0..12)) {
            let d = DesiredState::from_specs(desired.iter().map(|k| spec(&k.to_string()))).unwrap();
            let act: Vec<_> = actual.iter().map(|k| spec(&k.to_string())).collect();
            let cs = compute_changeset(&d, &act);
            for s in &cs.to_deploy {
                prop_assert!(!cs.to_undeploy.contains(&s.detector_id));
            }
            prop_assert_eq!(cs.to_deploy.len(), desired.difference(&actual).count());
            prop_assert_eq!(cs.to_undeploy.len(), actual.difference(&desired).count());
        }
    }
}
