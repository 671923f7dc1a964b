//! Golden KeySSI vectors. The pinned file is checked against the library,
//! and every pinned family is recomputed here from raw SHA-256, HKDF and
//! Ed25519/X25519 so the vectors cannot drift with the implementation.
//!
//! Regenerate with `DSUKIT_REGEN_VECTORS=1 cargo test -p dsukit-core --test keyssi_conformance`.

use std::path::PathBuf;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use dsukit_core::keyssi::{
    create_const_ssi, derive, encryption_key, secret_ssi_from_entropy, seed_ssi_from_entropy,
    sign, verify, KeySsi, KeySsiError,
};
use ed25519_dalek::{Signature as EdSignature, SigningKey, Verifier};
use hkdf::Hkdf;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Vectors {
    grammar: Vec<GrammarCase>,
    families: Vec<FamilyCase>,
    consts: Vec<ConstCase>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct GrammarCase {
    input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    canonical: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_field: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct FamilyCase {
    family: String,
    domain: String,
    entropy_hex: String,
    chain: Vec<String>,
    encryption_key_hex: String,
    signing_public_key: String,
    payload: String,
    signature: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ConstCase {
    domain: String,
    name: String,
    ssi: String,
}

fn vectors_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/keyssi_vectors.json")
}

const GRAMMAR_INPUTS: &[&str] = &[
    "ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY",
    "ssi:za:ePI.pharma:HASHSERIALISATION:HASHPUBLICKEY",
    "ssi:sread:ePI.pharma:abc:def:v0",
    "ssi:secret:a.b.c:x_y-z:ctl:v3:server1",
    "ssi:const:pharma:product-gtin-0001:",
    "ssi:hashlink:d:0123abcd::v0",
    "did:example:123",
    "ssi:seed:ePI.pharma:A",
    "ssi:seed:ePI.pharma:A:B:v0:h:extra",
    "ssi:nope:ePI.pharma:A:B",
    "ssi:seed:ePI..pharma:A:B",
    "ssi:seed::A:B",
    "ssi:seed:ePI.pharma::B",
    "ssi:seed:ePI.pharma:A:B:version1",
    "ssi:seed:ePI.pharma:A:B:v0:",
];

fn b64(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

fn generate() -> Vectors {
    let grammar = GRAMMAR_INPUTS
        .iter()
        .map(|input| match KeySsi::parse(input) {
            Ok(k) => GrammarCase {
                input: input.to_string(),
                canonical: Some(k.serialize()),
                error_field: None,
            },
            Err(KeySsiError::Parse { field, .. }) => GrammarCase {
                input: input.to_string(),
                canonical: None,
                error_field: Some(format!("{field:?}")),
            },
            Err(other) => panic!("unexpected error for {input}: {other}"),
        })
        .collect();
    let mut families = Vec::new();
    for (family, byte) in [("seed", 0x00u8), ("seed", 0x42), ("secret", 0x00), ("secret", 0xa5)] {
        let entropy: [u8; 32] = std::array::from_fn(|i| byte.wrapping_add(i as u8));
        let owner = match family {
            "seed" => seed_ssi_from_entropy("ePI.pharma", &entropy).unwrap(),
            _ => secret_ssi_from_entropy("ePI.pharma", &entropy).unwrap(),
        };
        let mut chain = vec![owner.clone()];
        while let Ok(next) = derive(chain.last().unwrap()) {
            chain.push(next);
        }
        let payload = format!("golden vector {family} {byte}");
        let sig = sign(&owner, payload.as_bytes()).unwrap();
        families.push(FamilyCase {
            family: family.into(),
            domain: "ePI.pharma".into(),
            entropy_hex: hex::encode(entropy),
            chain: chain.iter().map(KeySsi::serialize).collect(),
            encryption_key_hex: hex::encode(encryption_key(&owner).unwrap()),
            signing_public_key: sig.public_key.clone(),
            payload,
            signature: sig.bytes,
        });
    }
    let consts = [("pharma", "product-gtin-0001"), ("ePI.pharma", "leaflet/en")]
        .into_iter()
        .map(|(domain, name)| ConstCase {
            domain: domain.into(),
            name: name.into(),
            ssi: create_const_ssi(domain, name).unwrap().serialize(),
        })
        .collect();
    Vectors {
        grammar,
        families,
        consts,
    }
}

fn load() -> Vectors {
    if std::env::var_os("DSUKIT_REGEN_VECTORS").is_some() {
        let text = serde_json::to_string_pretty(&generate()).unwrap() + "\n";
        std::fs::write(vectors_path(), text).unwrap();
    }
    serde_json::from_str(&std::fs::read_to_string(vectors_path()).unwrap()).unwrap()
}

#[test]
fn library_reproduces_golden_vectors() {
    assert_eq!(generate(), load());
}

#[test]
fn documented_strings_have_expected_fields() {
    let seed = KeySsi::parse("ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY").unwrap();
    assert_eq!(seed.ssi_type().token(), "seed");
    assert_eq!(seed.domain(), "ePI.pharma");
    assert_eq!(seed.type_specific(), "RANDOMSEEDKEY");
    assert_eq!(seed.control(), "HASHRANDOMKEY");
    assert_eq!(seed.version(), "v0");
    assert_eq!(seed.hint(), None);
    let za = KeySsi::parse("ssi:za:ePI.pharma:HASHSERIALISATION:HASHPUBLICKEY").unwrap();
    assert_eq!(za.ssi_type().token(), "za");
    assert_eq!(za.type_specific(), "HASHSERIALISATION");
    assert_eq!(za.control(), "HASHPUBLICKEY");
}

fn h(parts: &[&[u8]]) -> [u8; 32] {
    let mut d = Sha256::new();
    for p in parts {
        d.update(p);
    }
    d.finalize().into()
}

fn hkdf(ikm: &[u8], info: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    Hkdf::<Sha256>::new(None, ikm).expand(info, &mut out).unwrap();
    out
}

/// Recomputes a family chain from the documented derivation rules.
fn oracle_chain(family: &str, domain: &str, entropy: &[u8; 32]) -> (Vec<String>, [u8; 32], [u8; 32]) {
    let signing_material = match family {
        "seed" => *entropy,
        _ => h(&[entropy, b"anchor"]),
    };
    let signing = SigningKey::from_bytes(&hkdf(&signing_material, b"dsu-sign"));
    let pk = signing.verifying_key().to_bytes();
    let ecies = x25519_dalek::StaticSecret::from(hkdf(&signing_material, b"dsu-ecies"));
    let epk = x25519_dalek::PublicKey::from(&ecies);
    let mut bundle = pk.to_vec();
    bundle.extend_from_slice(epk.as_bytes());
    let commitment = b64(&h(&[&pk]));
    let owner_type = if family == "seed" { "seed" } else { "secret" };
    let descriptor = format!("{owner_type}:{domain}:{}:v0", b64(&bundle));
    let za_specific = b64(&h(&[descriptor.as_bytes()]));
    let line = |t: &str, s: &str, c: &str| format!("ssi:{t}:{domain}:{s}:{c}:v0");
    let (chain, read_material) = if family == "seed" {
        let read = h(&[entropy]);
        (
            vec![
                line("seed", &b64(entropy), &commitment),
                line("sread", &b64(&read), &b64(&bundle)),
                line("sza", &za_specific, &commitment),
            ],
            read,
        )
    } else {
        let read = h(&[&signing_material, b"read"]);
        let public = h(&[&read, b"public"]);
        (
            vec![
                line("secret", &b64(entropy), &commitment),
                line("anchor", &b64(&signing_material), &b64(&bundle)),
                line("read", &b64(&read), &b64(&bundle)),
                line("public", &b64(&public), &b64(&bundle)),
                line("za", &za_specific, &commitment),
            ],
            read,
        )
    };
    (chain, hkdf(&read_material, b"dsu-read"), pk)
}

#[test]
fn golden_families_match_independent_derivation() {
    let vectors = load();
    assert!(!vectors.families.is_empty());
    for case in &vectors.families {
        let entropy: [u8; 32] = hex::decode(&case.entropy_hex).unwrap().try_into().unwrap();
        let (chain, key, pk) = oracle_chain(&case.family, &case.domain, &entropy);
        assert_eq!(case.chain, chain, "{} {}", case.family, case.entropy_hex);
        assert_eq!(case.encryption_key_hex, hex::encode(key));
        assert_eq!(case.signing_public_key, b64(&pk));

        let vk = ed25519_dalek::VerifyingKey::from_bytes(&pk).unwrap();
        let sig_bytes: [u8; 64] = URL_SAFE_NO_PAD.decode(&case.signature).unwrap().try_into().unwrap();
        vk.verify(case.payload.as_bytes(), &EdSignature::from_bytes(&sig_bytes)).unwrap();

        // One-wayness proxy: no lower rank repeats the owner's private string.
        let owner = KeySsi::parse(&case.chain[0]).unwrap();
        for lower in &case.chain[1..] {
            let lower = KeySsi::parse(lower).unwrap();
            assert_ne!(lower.type_specific(), owner.type_specific());
            assert_ne!(lower.control(), owner.type_specific());
        }
        // Library signature verifies with every rank of the pinned chain.
        let sig = sign(&owner, case.payload.as_bytes()).unwrap();
        for k in &case.chain {
            assert!(verify(&KeySsi::parse(k).unwrap(), case.payload.as_bytes(), &sig));
        }
    }
}

#[test]
fn golden_grammar_cases() {
    for case in load().grammar {
        match (KeySsi::parse(&case.input), &case.canonical, &case.error_field) {
            (Ok(k), Some(canonical), None) => {
                assert_eq!(&k.serialize(), canonical);
                assert_eq!(KeySsi::parse(canonical).unwrap().serialize(), *canonical);
            }
            (Err(KeySsiError::Parse { field, .. }), None, Some(expected)) => {
                assert_eq!(&format!("{field:?}"), expected, "{}", case.input)
            }
            (got, _, _) => panic!("{}: unexpected {got:?}", case.input),
        }
    }
}
