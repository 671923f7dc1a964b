use super::{KeySsi, KeySsiError, SsiField, SsiType, DEFAULT_VERSION, SCHEMA};

/// Checks a dot-separated domain name: non-empty labels of `[A-Za-z0-9_-]`.
pub fn validate_domain(domain: &str) -> Result<(), KeySsiError> {
    if domain.is_empty() {
        return Err(KeySsiError::parse(SsiField::Domain, "empty domain"));
    }
    for label in domain.split('.') {
        if label.is_empty() {
            return Err(KeySsiError::parse(
                SsiField::Domain,
                format!("empty label in {domain:?}"),
            ));
        }
        if let Some(c) = label
            .chars()
            .find(|c| !(c.is_ascii_alphanumeric() || *c == '-' || *c == '_'))
        {
            return Err(KeySsiError::parse(
                SsiField::Domain,
                format!("illegal character {c:?} in {domain:?}"),
            ));
        }
    }
    Ok(())
}

/// Opaque fields hold visible ASCII other than the ':' separator.
pub(crate) fn validate_token(
    field: SsiField,
    token: &str,
    allow_empty: bool,
) -> Result<(), KeySsiError> {
    if token.is_empty() && !allow_empty {
        return Err(KeySsiError::parse(field, "empty field"));
    }
    if let Some(c) = token.chars().find(|c| !c.is_ascii_graphic() || *c == ':') {
        return Err(KeySsiError::parse(
            field,
            format!("illegal character {c:?}"),
        ));
    }
    Ok(())
}

fn validate_version(version: &str) -> Result<(), KeySsiError> {
    let digits = version
        .strip_prefix('v')
        .ok_or_else(|| KeySsiError::parse(SsiField::Version, "must look like v<n>"))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(KeySsiError::parse(SsiField::Version, "must look like v<n>"));
    }
    Ok(())
}

pub(super) fn parse(text: &str) -> Result<KeySsi, KeySsiError> {
    let fields: Vec<&str> = text.split(':').collect();
    if fields[0] != SCHEMA {
        return Err(KeySsiError::parse(
            SsiField::Schema,
            format!("expected {SCHEMA:?}, found {:?}", fields[0]),
        ));
    }
    if !(5..=7).contains(&fields.len()) {
        return Err(KeySsiError::parse(
            SsiField::Count,
            format!("expected 5 to 7 fields, found {}", fields.len()),
        ));
    }
    let ssi_type = SsiType::from_token(fields[1]).ok_or_else(|| {
        KeySsiError::parse(SsiField::Type, format!("unknown type {:?}", fields[1]))
    })?;
    validate_domain(fields[2])?;
    validate_token(SsiField::TypeSpecific, fields[3], false)?;
    validate_token(SsiField::Control, fields[4], true)?;
    let version = match fields.get(5) {
        Some(v) => {
            validate_version(v)?;
            *v
        }
        None => DEFAULT_VERSION,
    };
    let hint = match fields.get(6) {
        Some(h) => {
            validate_token(SsiField::Hint, h, false)?;
            Some((*h).to_owned())
        }
        None => None,
    };
    Ok(KeySsi::from_parts(
        ssi_type,
        fields[2],
        fields[3].to_owned(),
        fields[4].to_owned(),
        version,
        hint,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples_parse() {
        let seed = KeySsi::parse("ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY").unwrap();
        assert_eq!(seed.ssi_type(), SsiType::Seed);
        assert_eq!(seed.domain(), "ePI.pharma");
        assert_eq!(seed.type_specific(), "RANDOMSEEDKEY");
        assert_eq!(seed.control(), "HASHRANDOMKEY");
        assert_eq!(seed.version(), "v0");
        assert_eq!(seed.hint(), None);

        let za = KeySsi::parse("ssi:za:ePI.pharma:HASHSERIALISATION:HASHPUBLICKEY").unwrap();
        assert_eq!(za.ssi_type(), SsiType::Za);
        assert_eq!(za.type_specific(), "HASHSERIALISATION");
        assert_eq!(za.control(), "HASHPUBLICKEY");
    }

    #[test]
    fn canonical_form_adds_version_and_keeps_hint() {
        let k = KeySsi::parse("ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY").unwrap();
        assert_eq!(
            k.serialize(),
            "ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY:v0"
        );
        let hinted = k.with_hint(Some("server1")).unwrap();
        assert!(hinted.serialize().ends_with(":v0:server1"));
        assert_eq!(KeySsi::parse(&hinted.serialize()).unwrap(), hinted);
    }

    #[test]
    fn errors_name_the_offending_field() {
        let field = |s: &str| match KeySsi::parse(s) {
            Err(KeySsiError::Parse { field, .. }) => field,
            other => panic!("expected parse error for {s}, got {other:?}"),
        };
        assert_eq!(field("did:example:123"), SsiField::Schema);
        assert_eq!(field("ssi:seed:dom:abc"), SsiField::Count);
        assert_eq!(field("ssi:seed:a:b:c:v0:h:extra"), SsiField::Count);
        assert_eq!(field("ssi:bogus:dom:abc:def"), SsiField::Type);
        assert_eq!(field("ssi:seed:bad domain:abc:def"), SsiField::Domain);
        assert_eq!(field("ssi:seed:a..b:abc:def"), SsiField::Domain);
        assert_eq!(field("ssi:seed::abc:def"), SsiField::Domain);
        assert_eq!(field("ssi:seed:dom::def"), SsiField::TypeSpecific);
        assert_eq!(field("ssi:seed:dom:abc:def:1"), SsiField::Version);
        assert_eq!(field("ssi:seed:dom:abc:def:v"), SsiField::Version);
        assert_eq!(field("ssi:seed:dom:abc:def:v0:"), SsiField::Hint);
    }

    #[test]
    fn empty_control_is_allowed() {
        let link = KeySsi::parse("ssi:hashlink:pharma:00ff::v0").unwrap();
        assert_eq!(link.control(), "");
        assert_eq!(link.serialize(), "ssi:hashlink:pharma:00ff::v0");
    }
}
