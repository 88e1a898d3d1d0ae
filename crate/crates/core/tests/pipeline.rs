use std::fs;

use kidaudit_core::apk::{decode_manifest, index_classes, open_apk};
use kidaudit_core::comments::{self, load_rules, rules_to_csv};
use kidaudit_core::fixtures::{write_demo_corpus, ApkBuilder, CorpusApp, CorpusSpec, DexBuilder, ManifestSpec};
use kidaudit_core::netflow::{ingest_flows, DeviceProfile};
use kidaudit_core::policy::{self, Audience, FindingCode};
use kidaudit_core::rating::{load_ratings, AgeGroupTable, RatingAuthority};
use kidaudit_core::report::{self, ScanConfig};
use kidaudit_core::signatures::{load_database, SignatureDatabase, TrackerSignature};

#[test]
fn apk_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("app.apk");
    let bytes =
        ApkBuilder::new(ManifestSpec::new("com.disk.app").permission(policy::ACCESS_COARSE_LOCATION).sdk(19, 30))
            .dex(DexBuilder::new().class("Lcom/disk/app/Main;"))
            .dex(DexBuilder::new().class("Lcom/chartboost/sdk/Chartboost;"))
            .build();
    fs::write(&path, bytes).unwrap();

    let apk = open_apk(&path).unwrap();
    assert_eq!(apk.dex_blobs.len(), 2);
    let m = decode_manifest(&apk.manifest_bytes).unwrap();
    assert_eq!(m.package_name, "com.disk.app");
    assert_eq!((m.min_sdk, m.target_sdk), (Some(19), Some(30)));
    assert!(m.permissions.contains(policy::ACCESS_COARSE_LOCATION));
    let classes = index_classes(&apk.dex_blobs).unwrap();
    let matched = SignatureDatabase::bundled().match_code(&classes);
    assert_eq!(matched.into_iter().collect::<Vec<_>>(), ["Chartboost"]);
}

#[test]
fn demo_files_load_individually() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_demo_corpus(dir.path(), &CorpusSpec::demo()).unwrap();
    let profile = DeviceProfile::load(corpus.profile_path()).unwrap();
    profile.validate().unwrap();

    let flows = ingest_flows(corpus.root.join("flows/com.funzone.quiz.json")).unwrap();
    assert_eq!(flows.len(), 2);
    assert!(flows.iter().all(|f| f.destination_host == "graph.facebook.com"));

    let ratings = load_ratings(corpus.root.join("ratings/com.tinytots.draw.json")).unwrap();
    let auths: Vec<_> = ratings.iter().map(|r| r.authority).collect();
    assert!(auths.contains(&RatingAuthority::PEGI) && auths.contains(&RatingAuthority::ESRB));

    let raw = comments::load_comments(corpus.root.join("comments/com.funzone.racing.json")).unwrap();
    let kept = comments::preprocess_all(&raw, &comments::PreprocessConfig::default());
    assert_eq!(kept.len(), 1, "a one-word review is too short");
}

#[test]
fn custom_tables_change_the_scan() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_demo_corpus(dir.path().join("c"), &CorpusSpec::demo()).unwrap();

    // Certify Firebase: the draw app keeps only its location finding.
    let mut sigs: Vec<TrackerSignature> = SignatureDatabase::bundled().signatures().to_vec();
    for s in &mut sigs {
        if s.name == "Google Firebase Analytics" {
            s.family_certified = true;
        }
    }
    let sig_path = dir.path().join("sigs.json");
    fs::write(&sig_path, SignatureDatabase::new(sigs).unwrap().to_json()).unwrap();
    assert!(load_database(&sig_path).unwrap().get("Google Firebase Analytics").unwrap().family_certified);

    // Write the bundled tables back out to check the loaders accept them.
    let age_path = dir.path().join("ages.csv");
    fs::write(&age_path, AgeGroupTable::bundled().to_csv()).unwrap();
    let rules_path = dir.path().join("rules.csv");
    fs::write(&rules_path, rules_to_csv(&comments::starter_rules())).unwrap();
    assert_eq!(load_rules(&rules_path).unwrap(), comments::starter_rules());

    let mut cfg = ScanConfig::new(&corpus.root);
    cfg.signature_db = Some(sig_path);
    cfg.age_table = Some(age_path);
    cfg.rules = Some(rules_path);
    let r = report::scan(&cfg).unwrap();
    let draw = r.apps.iter().find(|a| a.package == "com.tinytots.draw").unwrap();
    let codes: Vec<_> = draw.findings.iter().map(|f| f.code).collect();
    assert_eq!(codes, [FindingCode::LocationPermissionFamily]);
    assert_eq!(r.summary.apps_with_non_certified_trackers, 4);
}

#[test]
fn excluding_google_and_facebook() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_demo_corpus(dir.path(), &CorpusSpec::demo()).unwrap();
    let mut cfg = ScanConfig::new(&corpus.root);
    cfg.exclude_google_facebook = true;
    let r = report::scan(&cfg).unwrap();
    // draw (Firebase), quiz (Facebook) and puzzle (Google Analytics) lose
    // their only non-certified SDK.
    assert_eq!(r.summary.apps_with_non_certified_trackers, 2);
}

#[test]
fn missing_apk_directory_is_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        apps: vec![CorpusApp {
            no_apk: true,
            ..CorpusApp::new("com.meta.only", Some(Audience::IncludesChildren))
                .rating("AU", RatingAuthority::ACB, "G")
                .rating("US", RatingAuthority::ESRB, "Everyone")
        }],
        profile: None,
    };
    let corpus = write_demo_corpus(dir.path(), &spec).unwrap();
    let r = report::scan(&ScanConfig::new(&corpus.root)).unwrap();
    assert_eq!(r.apps.len(), 1);
    assert!(r.apps[0].apk.is_none());
    assert_eq!(r.apps[0].inconsistency.as_ref().unwrap().max_level, 0);
    assert_eq!(r.exit_code(), report::EXIT_OK);
}
