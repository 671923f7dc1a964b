use std::collections::BTreeMap;
use std::sync::Arc;

use super::brickmap::{
    decode_envelope, encode_envelope, open_section, seal_section, BrickMap, BrickRef, FileEntry,
    MountEntry, SealedMap, SectionMap,
};
use super::path::{ancestors, is_within, normalize, normalize_file, strip};
use super::secret::{parse_whitelist, WHITELIST_PATH};
use super::{DsuError, ServiceLocator};
use crate::anchoring::{AnchorId, AppendRequest, ExecutionMode, HashLink, VersionEntry};
use crate::brickstore::{BrickStore, MAX_BRICK_SIZE};
use crate::crypto::{b64, open, random_key, seal, SEAL_OVERHEAD};
use crate::keyssi::{
    self, encryption_key, public_section_key, secret_folder_key, AccessLevel, Family, FamilyKeys,
    KeySsi, KeySsiError,
};

/// Plaintext bytes per brick, so that a sealed brick fits the store limit.
pub const CHUNK_SIZE: usize = MAX_BRICK_SIZE - SEAL_OVERHEAD;
pub const MAX_MOUNT_DEPTH: usize = 64;

const PUBLIC_DIR: &str = "/public";
const SECRET_DIR: &str = "/secret";

#[derive(Clone)]
enum Slot {
    Stored(FileEntry),
    Written(Arc<[u8]>),
}

/// What the opening key lets a handle see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    /// Zero access: the anchor history only.
    History,
    /// `/public` of a Secret-family DSU.
    Public,
    Full,
}

/// An open DSU. Mutations stay local until [`DsuHandle::commit`].
pub struct DsuHandle {
    env: Arc<dyn ServiceLocator>,
    ssi: KeySsi,
    level: AccessLevel,
    anchor_id: AnchorId,
    version: Option<HashLink>,
    view: View,
    files: BTreeMap<String, Slot>,
    mounts: BTreeMap<String, KeySsi>,
    dirty: bool,
    modifier: Option<KeySsi>,
    /// Whitelist of the last committed version, if it had one.
    base_whitelist: Option<Vec<String>>,
    /// Anchors from the outermost DSU down to this one.
    chain: Vec<AnchorId>,
}

fn rank(ssi: &KeySsi) -> Result<AccessLevel, DsuError> {
    ssi.access_level()
        .ok_or(DsuError::Key(KeySsiError::NotInFamily(ssi.ssi_type())))
}

/// Registers the anchor of `seed`'s family and returns an empty handle.
pub fn create_dsu(env: &Arc<dyn ServiceLocator>, seed: &KeySsi) -> Result<DsuHandle, DsuError> {
    let level = rank(seed)?;
    if level != AccessLevel::Owner {
        return Err(DsuError::Privilege {
            op: "create",
            required: AccessLevel::Owner,
            actual: level,
        });
    }
    let anchor_id = AnchorId::for_family(seed)?;
    env.anchors(seed.domain())?.create_anchor(&anchor_id)?;
    Ok(DsuHandle::empty(env, seed)?)
}

/// Opens the DSU of `ssi`'s family at `version`, or at the latest version
/// this node knows of (pending optimistic commits included).
pub fn load_dsu(
    env: &Arc<dyn ServiceLocator>,
    ssi: &KeySsi,
    version: Option<&HashLink>,
) -> Result<DsuHandle, DsuError> {
    DsuHandle::open(env, ssi, version, Vec::new())
}

/// The anchored versions of `ssi`'s DSU, oldest first.
pub fn history(
    env: &Arc<dyn ServiceLocator>,
    ssi: &KeySsi,
    include_pending: bool,
) -> Result<Vec<VersionEntry>, DsuError> {
    rank(ssi)?;
    let anchor_id = AnchorId::for_family(ssi)?;
    Ok(env.anchors(ssi.domain())?.get_versions(&anchor_id, include_pending)?)
}

impl DsuHandle {
    pub(super) fn empty(env: &Arc<dyn ServiceLocator>, ssi: &KeySsi) -> Result<DsuHandle, DsuError> {
        let level = rank(ssi)?;
        let anchor_id = AnchorId::for_family(ssi)?;
        Ok(DsuHandle {
            env: Arc::clone(env),
            ssi: ssi.clone(),
            level,
            chain: vec![anchor_id.clone()],
            anchor_id,
            version: None,
            view: match level {
                AccessLevel::ZeroAccess => View::History,
                AccessLevel::Public => View::Public,
                _ => View::Full,
            },
            files: BTreeMap::new(),
            mounts: BTreeMap::new(),
            dirty: false,
            modifier: None,
            base_whitelist: None,
        })
    }

    fn open(
        env: &Arc<dyn ServiceLocator>,
        ssi: &KeySsi,
        version: Option<&HashLink>,
        mut chain: Vec<AnchorId>,
    ) -> Result<DsuHandle, DsuError> {
        let mut handle = DsuHandle::empty(env, ssi)?;
        if !chain.is_empty() {
            chain.push(handle.anchor_id.clone());
            handle.chain = chain;
        }
        let versions = env
            .anchors(ssi.domain())?
            .get_versions(&handle.anchor_id, true)?;
        let target = match version {
            Some(v) => versions
                .iter()
                .find(|e| &e.link == v)
                .map(|e| e.link.clone())
                .ok_or_else(|| DsuError::VersionNotFound(v.to_string()))?,
            None => match versions.last() {
                Some(e) => e.link.clone(),
                None => return Ok(handle),
            },
        };
        handle.version = Some(target.clone());
        if handle.view == View::History {
            return Ok(handle);
        }

        let domain = target.domain();
        let envelope = decode_envelope(&env.bricks(domain)?.get_brick(domain, &target.brick_hash())?)?;
        if handle.view == View::Public {
            if let Some(sealed) = envelope.public {
                let section: SectionMap = open_section(&public_section_key(ssi)?, &sealed)?;
                handle.insert_stored(section.entries);
            }
            return Ok(handle);
        }
        let map: BrickMap = open_section(&encryption_key(ssi)?, &envelope.main)?;
        handle.insert_stored(map.entries);
        if let (Some(sealed), true) = (map.secret, handle.level >= AccessLevel::Anchor) {
            let section: SectionMap = open_section(&secret_folder_key(ssi)?, &sealed)?;
            handle.insert_stored(section.entries);
        }
        handle.mounts = map.mounts.into_iter().map(|m| (m.path, m.ssi)).collect();
        handle.base_whitelist = handle.current_whitelist()?;
        Ok(handle)
    }

    fn insert_stored(&mut self, entries: Vec<FileEntry>) {
        for entry in entries {
            self.files.insert(entry.path.clone(), Slot::Stored(entry));
        }
    }

    pub fn ssi(&self) -> &KeySsi {
        &self.ssi
    }

    pub fn access_level(&self) -> AccessLevel {
        self.level
    }

    pub fn anchor_id(&self) -> &AnchorId {
        &self.anchor_id
    }

    /// Hash link of the brick map this state derives from.
    pub fn version(&self) -> Option<&HashLink> {
        self.version.as_ref()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub fn mounts(&self) -> impl Iterator<Item = (&str, &KeySsi)> {
        self.mounts.iter().map(|(p, s)| (p.as_str(), s))
    }

    pub fn history(&self, include_pending: bool) -> Result<Vec<VersionEntry>, DsuError> {
        history(&self.env, &self.ssi, include_pending)
    }

    /// Signs future commits' brick maps with `signer` instead of the DSU's
    /// own key. Relevant when a control whitelist is in force.
    pub fn set_modifier(&mut self, signer: KeySsi) -> Result<(), DsuError> {
        FamilyKeys::of(&signer)?;
        self.modifier = Some(signer);
        Ok(())
    }

    fn secret_family(&self) -> bool {
        self.ssi.family() == Some(Family::Secret)
    }

    fn require(&self, op: &'static str, required: AccessLevel) -> Result<(), DsuError> {
        if self.level >= required {
            Ok(())
        } else {
            Err(DsuError::Privilege {
                op,
                required,
                actual: self.level,
            })
        }
    }

    fn require_write(&self, op: &'static str) -> Result<(), DsuError> {
        self.require(op, AccessLevel::Anchor)
    }

    fn check_visible(&self, op: &'static str, path: &str) -> Result<(), DsuError> {
        match self.view {
            View::History => self.require(op, AccessLevel::Read),
            View::Public if path == "/" || is_within(path, PUBLIC_DIR) => Ok(()),
            View::Public => self.require(op, AccessLevel::Read),
            View::Full if self.secret_family() && is_within(path, SECRET_DIR) && path != "/" => {
                self.require(op, AccessLevel::Anchor)
            }
            View::Full => Ok(()),
        }
    }

    fn mount_for(&self, path: &str) -> Option<(&str, &KeySsi)> {
        self.mounts
            .iter()
            .find(|(m, _)| is_within(path, m))
            .map(|(m, s)| (m.as_str(), s))
    }

    fn check_not_mounted(&self, path: &str) -> Result<(), DsuError> {
        match self.mount_for(path) {
            Some((mount, _)) => Err(DsuError::MountedPath {
                path: path.to_owned(),
                mount: mount.to_owned(),
            }),
            None => Ok(()),
        }
    }

    pub fn read_file(&self, path: &str) -> Result<Vec<u8>, DsuError> {
        let path = normalize_file(path)?;
        if self.mount_for(&path).is_some() {
            let (target, rest) = self.resolve_mounted(&path)?;
            return target.read_file(&rest);
        }
        self.check_visible("read", &path)?;
        match self.files.get(&path) {
            None => Err(DsuError::NotFound(path)),
            Some(Slot::Written(data)) => Ok(data.to_vec()),
            Some(Slot::Stored(entry)) => self.fetch(entry),
        }
    }

    fn fetch(&self, entry: &FileEntry) -> Result<Vec<u8>, DsuError> {
        let domain = self.anchor_id.domain();
        let store = self.env.bricks(domain)?;
        let mut out = Vec::with_capacity(entry.size as usize);
        for brick in &entry.bricks {
            let sealed = store.get_brick(domain, &brick.hash)?;
            let plain = open(&brick.key, &sealed)
                .ok_or_else(|| DsuError::Corrupt(format!("brick {} of {} does not open", brick.hash, entry.path)))?;
            out.extend_from_slice(&plain);
        }
        if out.len() as u64 != entry.size {
            return Err(DsuError::Corrupt(format!(
                "{} reassembled to {} bytes, expected {}",
                entry.path,
                out.len(),
                entry.size
            )));
        }
        Ok(out)
    }

    /// Paths of the files under `prefix`. Mount points are not descended
    /// into unless `prefix` lies inside one; see [`DsuHandle::mounts`].
    pub fn list(&self, prefix: &str) -> Result<Vec<String>, DsuError> {
        let prefix = normalize(prefix)?;
        if let Some((mount, _)) = self.mount_for(&prefix) {
            let mount = mount.to_owned();
            let (target, rest) = self.resolve_mounted(&prefix)?;
            return Ok(target
                .list(&rest)?
                .into_iter()
                .map(|p| format!("{mount}{p}"))
                .collect());
        }
        self.check_visible("list", &prefix)?;
        Ok(self
            .files
            .keys()
            .filter(|p| is_within(p, &prefix))
            .cloned()
            .collect())
    }

    /// Every readable file and its contents.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Vec<u8>>, DsuError> {
        self.list("/")?
            .into_iter()
            .map(|p| self.read_file(&p).map(|data| (p, data)))
            .collect()
    }

    pub fn write_file(&mut self, path: &str, data: &[u8]) -> Result<(), DsuError> {
        self.require_write("write")?;
        let path = normalize_file(path)?;
        self.check_not_mounted(&path)?;
        if let Some(file) = ancestors(&path).find(|a| self.files.contains_key(*a)) {
            return Err(DsuError::PathConflict(format!("{file} is a file, cannot hold {path}")));
        }
        if self.files.keys().any(|f| f != &path && is_within(f, &path)) {
            return Err(DsuError::PathConflict(format!("{path} is a directory")));
        }
        if self.mounts.keys().any(|m| is_within(m, &path)) {
            return Err(DsuError::PathConflict(format!("{path} contains a mount point")));
        }
        self.files.insert(path, Slot::Written(Arc::from(data)));
        self.dirty = true;
        Ok(())
    }

    pub fn delete(&mut self, path: &str) -> Result<(), DsuError> {
        self.require_write("delete")?;
        let path = normalize_file(path)?;
        self.check_not_mounted(&path)?;
        self.files.remove(&path).ok_or(DsuError::NotFound(path))?;
        self.dirty = true;
        Ok(())
    }

    /// Mounts the DSU of `target` at `mount_point`. Reads below it go to
    /// that DSU, opened with `target`'s own rank.
    pub fn mount(&mut self, mount_point: &str, target: KeySsi) -> Result<(), DsuError> {
        self.require_write("mount")?;
        rank(&target)?;
        let point = normalize_file(mount_point)?;
        if self.files.keys().any(|f| is_within(f, &point)) {
            return Err(DsuError::PathConflict(format!("cannot mount over existing files at {point}")));
        }
        if let Some(file) = ancestors(&point).find(|a| self.files.contains_key(*a)) {
            return Err(DsuError::PathConflict(format!("{file} is a file, cannot hold {point}")));
        }
        if let Some(other) = self
            .mounts
            .keys()
            .find(|m| is_within(&point, m) || is_within(m, &point))
        {
            return Err(DsuError::PathConflict(format!("{point} overlaps mount point {other}")));
        }
        self.mounts.insert(point, target);
        self.dirty = true;
        Ok(())
    }

    pub fn unmount(&mut self, mount_point: &str) -> Result<(), DsuError> {
        self.require_write("unmount")?;
        let point = normalize_file(mount_point)?;
        self.mounts.remove(&point).ok_or(DsuError::NotFound(point))?;
        self.dirty = true;
        Ok(())
    }

    /// Opens the DSU mounted over `path` and returns it with the path
    /// relative to its root.
    pub fn resolve_mounted(&self, path: &str) -> Result<(DsuHandle, String), DsuError> {
        let path = normalize(path)?;
        let (mount, target) = self
            .mount_for(&path)
            .ok_or_else(|| DsuError::NotFound(format!("mount point above {path}")))?;
        let target_anchor = AnchorId::for_family(target)?;
        if self.chain.contains(&target_anchor) {
            return Err(DsuError::MountCycle(target_anchor.to_string()));
        }
        if self.chain.len() >= MAX_MOUNT_DEPTH {
            return Err(DsuError::MountDepth(MAX_MOUNT_DEPTH));
        }
        let handle = DsuHandle::open(&self.env, target, None, self.chain.clone())?;
        Ok((handle, strip(&path, mount)))
    }

    fn current_whitelist(&self) -> Result<Option<Vec<String>>, DsuError> {
        match self.files.get(WHITELIST_PATH) {
            None => Ok(None),
            Some(Slot::Written(data)) => Ok(Some(parse_whitelist(data))),
            Some(Slot::Stored(entry)) => Ok(Some(parse_whitelist(&self.fetch(entry)?))),
        }
    }

    /// Encrypts and stores pending changes, writes a new brick map and
    /// anchors it. On any failure before anchoring the anchor is untouched.
    pub fn commit(&mut self, mode: ExecutionMode) -> Result<HashLink, DsuError> {
        self.require_write("commit")?;
        if !self.dirty {
            return Err(DsuError::NoChanges);
        }
        let signer = self.modifier.clone().unwrap_or_else(|| self.ssi.clone());
        let modifier_key = b64(FamilyKeys::of(&signer)?.verifying_key().as_bytes());
        // The previous version's whitelist governs; a first version is
        // governed by its own.
        let whitelist = match &self.base_whitelist {
            Some(list) => Some(list.clone()),
            None if self.version.is_none() => self.current_whitelist()?,
            None => None,
        };
        if whitelist.is_some_and(|list| !list.contains(&modifier_key)) {
            return Err(DsuError::NotWhitelisted(modifier_key));
        }

        let domain = self.anchor_id.domain().to_owned();
        let store = self.env.bricks(&domain)?;
        let anchors = self.env.anchors(&domain)?;
        let secret_family = self.secret_family();

        let mut stored = BTreeMap::new();
        for (path, slot) in &self.files {
            let entry = match slot {
                Slot::Stored(entry) => entry.clone(),
                Slot::Written(data) => store_file(&*store, &domain, path, data)?,
            };
            stored.insert(path.clone(), entry);
        }
        let (mut main, mut public, mut secret) = (Vec::new(), Vec::new(), Vec::new());
        for entry in stored.values() {
            if secret_family && is_within(&entry.path, SECRET_DIR) {
                secret.push(entry.clone());
                continue;
            }
            if secret_family && is_within(&entry.path, PUBLIC_DIR) {
                public.push(entry.clone());
            }
            main.push(entry.clone());
        }
        let mut map = BrickMap {
            entries: main,
            mounts: self
                .mounts
                .iter()
                .map(|(path, ssi)| MountEntry {
                    path: path.clone(),
                    ssi: ssi.clone(),
                })
                .collect(),
            previous: self.version.clone(),
            created_at: crate::anchoring::now_millis(),
            secret: None,
            modifier: None,
        };
        if !secret.is_empty() {
            map.secret = Some(seal_section(
                &secret_folder_key(&self.ssi)?,
                &SectionMap { entries: secret },
            ));
        }
        map.modifier = Some(keyssi::sign(&signer, &map.modifier_payload())?);
        let public = if secret_family {
            Some(seal_section(
                &public_section_key(&self.ssi)?,
                &SectionMap { entries: public },
            ))
        } else {
            None
        };
        let envelope = encode_envelope(SealedMap {
            main: seal_section(&encryption_key(&self.ssi)?, &map),
            public,
        });
        let hash = store.put_brick(&domain, &envelope)?;
        let link = HashLink::new(&domain, &hash)?;
        let request = AppendRequest::signed(
            &self.ssi,
            self.anchor_id.clone(),
            link.clone(),
            self.version.clone(),
            mode,
        )?;
        anchors.append_version(request)?;

        self.files = stored.into_iter().map(|(p, e)| (p, Slot::Stored(e))).collect();
        self.version = Some(link.clone());
        self.base_whitelist = self.current_whitelist()?;
        self.dirty = false;
        Ok(link)
    }
}

fn store_file(store: &dyn BrickStore, domain: &str, path: &str, data: &[u8]) -> Result<FileEntry, DsuError> {
    let mut bricks = Vec::with_capacity(data.len().div_ceil(CHUNK_SIZE));
    for chunk in data.chunks(CHUNK_SIZE) {
        let key = random_key();
        let hash = store.put_brick(domain, &seal(&key, chunk))?;
        bricks.push(BrickRef { hash, key });
    }
    Ok(FileEntry {
        path: path.to_owned(),
        size: data.len() as u64,
        bricks,
    })
}
