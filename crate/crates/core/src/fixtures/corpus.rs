use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::comments::RawComment;
use crate::netflow::{flows_to_json, DeviceProfile, FlowRecord, LocationTokens};
use crate::policy::{AppMetadata, Audience, ACCESS_COARSE_LOCATION, ACCESS_FINE_LOCATION};
use crate::rating::{ratings_to_json, RatingAuthority};

use super::{ApkBuilder, DexBuilder, ManifestSpec};

/// One app in a generated corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusApp {
    pub package: String,
    /// `None` writes no metadata file.
    pub audience: Option<Audience>,
    pub permissions: Vec<String>,
    /// Class descriptors such as `Lcom/unity3d/ads/UnityAds;`.
    pub classes: Vec<String>,
    /// Filler bytes added to the DEX file.
    pub dex_padding: usize,
    /// Write garbage instead of an APK.
    pub corrupt_apk: bool,
    /// Write no APK at all.
    pub no_apk: bool,
    pub flows: Vec<FlowRecord>,
    pub ratings: Vec<(String, RatingAuthority, String)>,
    pub comments: Vec<(u8, String)>,
}

impl CorpusApp {
    pub fn new(package: &str, audience: Option<Audience>) -> Self {
        CorpusApp { package: package.to_string(), audience, ..Default::default() }
    }

    pub fn permission(mut self, p: &str) -> Self {
        self.permissions.push(p.to_string());
        self
    }

    pub fn class(mut self, path: &str) -> Self {
        self.classes.push(format!("L{path};"));
        self
    }

    pub fn flow(mut self, host: &str, timestamp: i64, payload: &str, consent_given: bool) -> Self {
        self.flows.push(FlowRecord {
            app_package: self.package.clone(),
            destination_host: host.to_string(),
            timestamp,
            payload_text: payload.to_string(),
            consent_given,
        });
        self
    }

    pub fn rating(mut self, country: &str, authority: RatingAuthority, label: &str) -> Self {
        self.ratings.push((country.to_string(), authority, label.to_string()));
        self
    }

    pub fn comment(mut self, stars: u8, text: &str) -> Self {
        self.comments.push((stars, text.to_string()));
        self
    }

    pub fn apk_bytes(&self) -> Vec<u8> {
        let mut manifest = ManifestSpec::new(&self.package).sdk(21, 33);
        for p in &self.permissions {
            manifest = manifest.permission(p);
        }
        let mut dex = DexBuilder::new().class(&format!("L{}/MainActivity;", self.package.replace('.', "/")));
        for c in &self.classes {
            dex = dex.class(c);
        }
        ApkBuilder::new(manifest).dex(dex.padding(self.dex_padding)).build()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusSpec {
    pub apps: Vec<CorpusApp>,
    pub profile: Option<DeviceProfile>,
}

/// Paths of a corpus written to disk.
#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub root: PathBuf,
    pub packages: Vec<String>,
}

impl DemoCorpus {
    pub fn profile_path(&self) -> PathBuf {
        self.root.join("device_profile.json")
    }
}

/// The capture-device profile used by the demo corpus.
pub fn demo_profile() -> DeviceProfile {
    DeviceProfile {
        device_model: Some("Redmi Note9 Pro".into()),
        brand: Some("xiaomi".into()),
        board: Some("miatoll".into()),
        build_number: Some("QQ3A.200905.001".into()),
        mac_address: Some("a4:50:46:12:34:56".into()),
        private_ip: Some("192.168.1.23".into()),
        device_fingerprint: Some("google/walleye/walleye:8.1.0/OPM1.171019.011/4448085:user/release-keys".into()),
        location: LocationTokens {
            country: Some("Australia".into()),
            city: Some("Adelaide".into()),
            latitude: Some("-34.928500".into()),
            longitude: Some("138.600700".into()),
        },
        timezone: Some("America/New_York".into()),
        imei: Some("866400053132507".into()),
        serial: Some("3a9eb795".into()),
        advertising_id: Some("7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe1".into()),
    }
}

impl CorpusSpec {
    /// Ten apps covering every analysis, including a corrupt APK, an app
    /// with an APK only, and an app with no metadata.
    pub fn demo() -> Self {
        use Audience::*;
        use RatingAuthority::*;
        let ad_id = "7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe1";
        let apps = vec![
            CorpusApp::new("com.tinytots.abc", Some(FamilyDesigned))
                .permission("android.permission.INTERNET")
                .class("com/unity3d/ads/UnityAds")
                .class("com/kidoz/sdk/api/KidozSDK")
                .flow("config.unity3d.com", 1_700_000_010, "device=Redmi Note9 Pro&tz=America/New_York", false)
                .rating("AU", ACB, "G")
                .rating("US", ESRB, "Everyone")
                .rating("DE", USK, "0+")
                .comment(1, "way too many ads in this kids game")
                .comment(5, "love it so much my daughter plays daily"),
            CorpusApp::new("com.tinytots.draw", Some(FamilyDesigned))
                .permission(ACCESS_FINE_LOCATION)
                .class("com/applovin/sdk/AppLovinSdk")
                .class("com/google/firebase/analytics/FirebaseAnalytics")
                .rating("FR", PEGI, "3")
                .rating("US", ESRB, "Mature 17+")
                .comment(1, "this app is improper for a kid honestly")
                .comment(2, "it has a virus do not install"),
            CorpusApp::new("com.funzone.racing", Some(IncludesChildren))
                .permission(ACCESS_COARSE_LOCATION)
                .class("com/appsflyer/AppsFlyerLib")
                .class("com/adjust/sdk/Adjust")
                .class("com/flurry/android/FlurryAgent")
                .class("io/branch/referral/Branch")
                .class("com/onesignal/OneSignal")
                .class("com/mopub/mobileads/MoPubView")
                .class("com/tapjoy/Tapjoy")
                .class("com/startapp/sdk/StartAppSDK")
                .class("com/amplitude/api/Amplitude")
                .class("com/mixpanel/android/MixpanelAPI")
                .class("com/moat/analytics/MoatAnalytics")
                .rating("GB", PEGI, "12")
                .rating("DE", USK, "16+")
                .comment(1, "the app stole my information and location")
                .comment(1, "bad"),
            CorpusApp::new("com.funzone.quiz", Some(IncludesChildren))
                .class("com/facebook/appevents/AppEventsLogger")
                .class("com/chartboost/sdk/Chartboost")
                .flow("graph.facebook.com", 1_700_000_100, &format!("advertiser_id={ad_id}&event=launch"), false)
                .flow("graph.facebook.com", 1_700_000_160, &format!("advertiser_id={ad_id}&event=level"), false)
                .comment(2, "ads every two seconds really annoying"),
            CorpusApp::new("com.learn.math", Some(FamilyDesigned)).class("tv/superawesome/sdk/SuperAwesome"),
            CorpusApp {
                corrupt_apk: true,
                ..CorpusApp::new("com.learn.words", Some(FamilyDesigned))
                    .rating("DE", USK, "6+")
                    .rating("FR", PEGI, "7")
            },
            CorpusApp::new("com.story.time", Some(FamilyDesigned))
                .class("com/vungle/warren/Vungle")
                .class("com/ironsource/mediationsdk/IronSource")
                .flow("api.vungle.com", 1_700_000_200, "mac=a4:50:46:12:34:56&ip=192.168.1.23", false),
            CorpusApp::new("com.puzzle.world", Some(IncludesChildren))
                .class("com/google/android/gms/ads/MobileAds")
                .class("com/google/android/gms/analytics/Tracker")
                .flow("example.org", 1_700_000_300, "hello=world", true)
                .rating("AU", ACB, "PG")
                .rating("US", ESRB, "Teen")
                .comment(1, "nice puzzles but the music is loud"),
            CorpusApp::new("com.color.fun", Some(FamilyDesigned))
                .permission(ACCESS_COARSE_LOCATION)
                .permission(ACCESS_FINE_LOCATION)
                .class("com/inmobi/ads/InMobiBanner"),
            CorpusApp::new("com.music.band", None).class("com/mintegral/msdk/MBridgeSDK"),
        ];
        CorpusSpec { apps, profile: Some(demo_profile()) }
    }
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)
}

/// Lays a corpus out as `apks/`, `metadata/`, `flows/`, `ratings/` and
/// `comments/`, one file per app named after the package, plus
/// `device_profile.json`.
pub fn write_demo_corpus(root: impl AsRef<Path>, spec: &CorpusSpec) -> io::Result<DemoCorpus> {
    let root = root.as_ref().to_path_buf();
    fs::create_dir_all(&root)?;
    for app in &spec.apps {
        let name = &app.package;
        if app.corrupt_apk {
            write(root.join("apks").join(format!("{name}.apk")), b"this is not a zip archive")?;
        } else if !app.no_apk {
            write(root.join("apks").join(format!("{name}.apk")), app.apk_bytes())?;
        }
        if let Some(audience) = app.audience {
            let meta = AppMetadata::new(name, audience);
            write(
                root.join("metadata").join(format!("{name}.json")),
                serde_json::to_string_pretty(&meta).expect("metadata serializes"),
            )?;
        }
        if !app.flows.is_empty() {
            write(root.join("flows").join(format!("{name}.json")), flows_to_json(&app.flows, None))?;
        }
        if !app.ratings.is_empty() {
            let r: Vec<(&str, RatingAuthority, &str)> =
                app.ratings.iter().map(|(c, a, l)| (c.as_str(), *a, l.as_str())).collect();
            write(root.join("ratings").join(format!("{name}.json")), ratings_to_json(name, &r))?;
        }
        if !app.comments.is_empty() {
            let raw: Vec<RawComment> = app
                .comments
                .iter()
                .enumerate()
                .map(|(i, (stars, text))| RawComment {
                    id: format!("{name}#{i}"),
                    app_package: name.clone(),
                    stars: *stars,
                    text: text.clone(),
                })
                .collect();
            write(
                root.join("comments").join(format!("{name}.json")),
                serde_json::to_string_pretty(&raw).expect("comments serialize"),
            )?;
        }
    }
    if let Some(profile) = &spec.profile {
        write(root.join("device_profile.json"), serde_json::to_string_pretty(profile).expect("profile serializes"))?;
    }
    Ok(DemoCorpus { root, packages: spec.apps.iter().map(|a| a.package.clone()).collect() })
}
