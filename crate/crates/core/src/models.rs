//! The four networks (generator, discriminator, encoder, classifier), their
//! inference conventions, and the `LSDC` checkpoint format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "LSDC" | u32 version | u32 header_len | header (UTF-8, `key = value` lines) | f32 payload
//! ```
//!
//! The header carries `role`, `layers` (`IN x OUT : activation`, comma separated),
//! `param_count`, `epochs`, `seed` and any `hp.*` hyperparameters. The payload
//! holds `param_count` values in layer order, weights (row-major, out × in) then bias.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};
use crate::rng::SeededRng;
use crate::tensor::{split_columns, Tensor};

pub const IMAGE_DIM: usize = 784;
pub const NUM_LABELS: usize = 10;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LSDC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
    Encoder,
    Classifier,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Encoder => "encoder",
            Role::Classifier => "classifier",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generator" => Role::Generator,
            "discriminator" => Role::Discriminator,
            "encoder" => Role::Encoder,
            "classifier" => Role::Classifier,
            other => return Err(Error::MalformedHeader(format!("unknown role {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub role: Role,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetworkSpec {
    /// M → 256 → 512 → 784, tanh head.
    pub fn generator(latent_dim: usize) -> Self {
        use Activation::*;
        Self {
            role: Role::Generator,
            widths: vec![latent_dim, 256, 512, IMAGE_DIM],
            activations: vec![Relu, Relu, Tanh],
        }
    }

    /// 784 → 512 → 256 → 1, sigmoid head.
    pub fn discriminator() -> Self {
        use Activation::*;
        Self {
            role: Role::Discriminator,
            widths: vec![IMAGE_DIM, 512, 256, 1],
            activations: vec![Relu, Relu, Sigmoid],
        }
    }

    /// 784 → 512 → 2M; the first M outputs are μ, the last M are log σ.
    pub fn encoder(latent_dim: usize) -> Self {
        use Activation::*;
        Self {
            role: Role::Encoder,
            widths: vec![IMAGE_DIM, 512, 2 * latent_dim],
            activations: vec![Relu, Linear],
        }
    }

    /// 784 → 256 → 128 → l, softmax head.
    pub fn classifier(labels: usize) -> Self {
        use Activation::*;
        Self {
            role: Role::Classifier,
            widths: vec![IMAGE_DIM, 256, 128, labels],
            activations: vec![Relu, Relu, Softmax],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.activations.len() + 1 || self.activations.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{}: {} widths vs {} activations",
                self.role,
                self.widths.len(),
                self.activations.len()
            )));
        }
        let head = *self.activations.last().expect("non-empty");
        let (inp, out) = (self.input_dim(), self.output_dim());
        let ok = match self.role {
            Role::Generator => out == IMAGE_DIM && head == Activation::Tanh,
            Role::Discriminator => inp == IMAGE_DIM && out == 1 && head == Activation::Sigmoid,
            Role::Encoder => inp == IMAGE_DIM && out % 2 == 0 && head == Activation::Linear,
            Role::Classifier => inp == IMAGE_DIM && head == Activation::Softmax,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{} spec violates its role contract: {}",
                self.role,
                self.layer_string()
            )));
        }
        Ok(())
    }

    fn layer_string(&self) -> String {
        self.widths
            .windows(2)
            .zip(&self.activations)
            .map(|(w, a)| format!("{}x{}:{}", w[0], w[1], a))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn parse_layers(role: Role, text: &str) -> Result<Self> {
        let mut widths = Vec::new();
        let mut activations = Vec::new();
        for (idx, item) in text.split(',').enumerate() {
            let (dims, act) = item
                .split_once(':')
                .ok_or_else(|| Error::MalformedHeader(format!("layer {item:?}")))?;
            let (a, b) = dims
                .split_once('x')
                .ok_or_else(|| Error::MalformedHeader(format!("layer {item:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::MalformedHeader(format!("layer width {s:?}")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if idx == 0 {
                widths.push(a);
            } else if widths.last() != Some(&a) {
                return Err(Error::MalformedHeader(format!("layer chain breaks at {item:?}")));
            }
            widths.push(b);
            activations.push(act.trim().parse()?);
        }
        Ok(Self {
            role,
            widths,
            activations,
        })
    }
}

/// A network with its role contract and training metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    mlp: Mlp<f32>,
    pub epochs: u64,
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
}

impl Network {
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::stream(seed, "init", &[spec.role as u64]);
        let mlp = Mlp::init(&spec.widths, &spec.activations, &mut rng)?;
        Ok(Self {
            spec,
            mlp,
            epochs: 0,
            seed,
            hyperparameters: BTreeMap::new(),
        })
    }

    pub fn from_parts(spec: NetworkSpec, mlp: Mlp<f32>) -> Result<Self> {
        spec.validate()?;
        let shapes_match = mlp.layers().len() == spec.activations.len()
            && mlp
                .layers()
                .iter()
                .zip(spec.widths.windows(2).zip(&spec.activations))
                .all(|(l, (w, &a))| l.inputs() == w[0] && l.outputs() == w[1] && l.activation == a);
        if !shapes_match {
            return Err(Error::InvalidArgument(format!(
                "network layers do not match spec {}",
                spec.layer_string()
            )));
        }
        Ok(Self {
            spec,
            mlp,
            epochs: 0,
            seed: 0,
            hyperparameters: BTreeMap::new(),
        })
    }

    pub fn role(&self) -> Role {
        self.spec.role
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn mlp(&self) -> &Mlp<f32> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<f32> {
        &mut self.mlp
    }

    pub fn expect_role(&self, role: Role) -> Result<()> {
        if self.spec.role != role {
            return Err(Error::InvalidArgument(format!(
                "expected a {role} network, got a {}",
                self.spec.role
            )));
        }
        Ok(())
    }

    /// Latent dimension M implied by the role (generator input, encoder half-output).
    pub fn latent_dim(&self) -> Option<usize> {
        match self.spec.role {
            Role::Generator => Some(self.spec.input_dim()),
            Role::Encoder => Some(self.spec.output_dim() / 2),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(&format!("role = {}\n", self.spec.role));
        header.push_str(&format!("layers = {}\n", self.spec.layer_string()));
        header.push_str(&format!("param_count = {}\n", self.mlp.param_count()));
        header.push_str(&format!("epochs = {}\n", self.epochs));
        header.push_str(&format!("seed = {}\n", self.seed));
        for (k, v) in &self.hyperparameters {
            header.push_str(&format!("hp.{k} = {v}\n"));
        }
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.mlp.param_count());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).expect("vec write");
        out.write_u32::<LittleEndian>(header.len() as u32).expect("vec write");
        out.extend_from_slice(header.as_bytes());
        for p in self.mlp.params() {
            for &v in p.data() {
                out.write_f32::<LittleEndian>(v).expect("vec write");
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)
            .map_err(|_| Error::NotACheckpoint(magic))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::NotACheckpoint(magic));
        }
        let version = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Truncated("checkpoint version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Truncated("checkpoint header length".into()))? as usize;
        let start = cur.position() as usize;
        let header_bytes = bytes
            .get(start..start + header_len)
            .ok_or_else(|| Error::Truncated(format!("checkpoint header ({header_len} bytes declared)")))?;
        let header = std::str::from_utf8(header_bytes)
            .map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
        let fields = parse_header(header)?;
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::MalformedHeader(format!("missing key {k:?}")))
        };
        let role: Role = get("role")?.parse()?;
        let spec = NetworkSpec::parse_layers(role, get("layers")?)?;
        spec.validate()?;
        let declared: usize = get("param_count")?
            .parse()
            .map_err(|_| Error::MalformedHeader("param_count".into()))?;
        let from_shapes: usize = spec.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if declared != from_shapes {
            return Err(Error::MalformedHeader(format!(
                "param_count {declared} disagrees with layer shapes ({from_shapes})"
            )));
        }
        let payload = &bytes[start + header_len..];
        if payload.len() != 4 * declared {
            return Err(Error::PayloadLengthMismatch {
                expected: declared,
                actual: payload.len() / 4,
            });
        }
        let mut values = Cursor::new(payload);
        let mut layers = Vec::with_capacity(spec.activations.len());
        for (w, &act) in spec.widths.windows(2).zip(&spec.activations) {
            let mut read = |n: usize| -> Result<Vec<f32>> {
                let mut v = vec![0f32; n];
                values
                    .read_f32_into::<LittleEndian>(&mut v)
                    .map_err(|_| Error::Truncated("checkpoint payload".into()))?;
                Ok(v)
            };
            let weights = Tensor::new(vec![w[1], w[0]], read(w[0] * w[1])?)?;
            let bias = Tensor::new(vec![w[1]], read(w[1])?)?;
            layers.push(Dense {
                weights,
                bias,
                activation: act,
            });
        }
        let mut net = Network::from_parts(spec, Mlp::new(layers)?)?;
        net.epochs = get("epochs")?
            .parse()
            .map_err(|_| Error::MalformedHeader("epochs".into()))?;
        net.seed = get("seed")?
            .parse()
            .map_err(|_| Error::MalformedHeader("seed".into()))?;
        net.hyperparameters = fields
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("hp.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(net)
    }
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("line {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, net.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    Network::from_bytes(&fs::read(path)?)
}

/// Decodes a (batch, M) latent batch into (batch, 784) images in [−1, 1].
pub fn generate(generator: &Network, z: &Tensor) -> Result<Tensor> {
    generator.expect_role(Role::Generator)?;
    let m = generator.spec.input_dim();
    if z.shape().len() != 2 || z.cols() != m {
        return Err(Error::ShapeMismatch {
            op: "generate (latent vs generator input)",
            left: z.shape().to_vec(),
            right: vec![z.rows(), m],
        });
    }
    generator.mlp.forward(z)
}

/// Discriminator probabilities, shape (batch, 1).
pub fn discriminate(disc: &Network, x: &Tensor) -> Result<Tensor> {
    disc.expect_role(Role::Discriminator)?;
    disc.mlp.forward(x)
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub z: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
}

/// Encoder heads: (μ, log σ) for a batch of images.
pub fn encoder_heads(encoder: &Network, x: &Tensor) -> Result<(Tensor, Tensor)> {
    encoder.expect_role(Role::Encoder)?;
    let out = encoder.mlp.forward(x)?;
    let m = out.cols() / 2;
    Ok(split_columns(&out, m))
}

/// `z = μ + σ ⊙ ε` with ε ~ N(0, I) drawn from `rng`.
pub fn encode(encoder: &Network, x: &Tensor, rng: &mut SeededRng) -> Result<Encoded> {
    let m = encoder
        .latent_dim()
        .ok_or_else(|| Error::InvalidArgument("encode needs an encoder".into()))?;
    let eps = rng.normal_tensor(&[x.rows(), m]);
    encode_with_noise(encoder, x, &eps)
}

/// Reparameterized encode with caller-supplied ε (all-zero ε gives z = μ).
pub fn encode_with_noise(encoder: &Network, x: &Tensor, eps: &Tensor) -> Result<Encoded> {
    let (mu, log_sigma) = encoder_heads(encoder, x)?;
    eps.ensure_shape("encode (noise vs latent)", mu.shape())?;
    let sigma = log_sigma.map(f32::exp);
    let mut z = mu.clone();
    for ((z, &s), &e) in z.data_mut().iter_mut().zip(sigma.data()).zip(eps.data()) {
        *z += s * e;
    }
    Ok(Encoded { z, mu, sigma })
}

/// Softmax probabilities and argmax labels; ties go to the lowest label.
pub fn classify(classifier: &Network, x: &Tensor) -> Result<(Tensor, Vec<u8>)> {
    classifier.expect_role(Role::Classifier)?;
    let probs = classifier.mlp.forward(x)?;
    let labels = (0..probs.rows()).map(|i| argmax(probs.row(i)) as u8).collect();
    Ok((probs, labels))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_specs_satisfy_role_contracts() {
        for spec in [
            NetworkSpec::generator(100),
            NetworkSpec::discriminator(),
            NetworkSpec::encoder(100),
            NetworkSpec::classifier(10),
        ] {
            spec.validate().unwrap();
        }
        let mut bad = NetworkSpec::generator(100);
        bad.activations[2] = Activation::Sigmoid;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn untrained_generator_range() {
        let g = Network::init(NetworkSpec::generator(8), 1).unwrap();
        let z = Tensor::zeros(&[1, 8]);
        let x = generate(&g, &z).unwrap();
        assert_eq!(x.shape(), &[1, IMAGE_DIM]);
        assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(generate(&g, &z).unwrap(), x);
    }

    #[test]
    fn generate_rejects_wrong_latent_dim() {
        let g = Network::init(NetworkSpec::generator(8), 1).unwrap();
        assert!(generate(&g, &Tensor::zeros(&[2, 9])).is_err());
    }

    #[test]
    fn encode_noise_and_determinism() {
        let e = Network::init(NetworkSpec::encoder(6), 2).unwrap();
        let x = Tensor::filled(&[2, IMAGE_DIM], 0.3);
        let a = encode(&e, &x, &mut SeededRng::new(1)).unwrap();
        let b = encode(&e, &x, &mut SeededRng::new(2)).unwrap();
        assert_ne!(a.z, b.z);
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.sigma, b.sigma);
        assert!(a.sigma.data().iter().all(|&s| s > 0.0));
        let again = encode(&e, &x, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a.z, again.z);
        let exact = encode_with_noise(&e, &x, &Tensor::zeros(&[2, 6])).unwrap();
        assert_eq!(exact.z, exact.mu);
    }

    #[test]
    fn classify_rows_and_ties() {
        let c = Network::init(NetworkSpec::classifier(10), 3).unwrap();
        let mut rng = SeededRng::new(9);
        let mut x = Tensor::zeros(&[4, IMAGE_DIM]);
        for v in x.data_mut() {
            *v = (2.0 * rng.uniform() - 1.0) as f32;
        }
        let (p, labels) = classify(&c, &x).unwrap();
        for i in 0..4 {
            let s: f32 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
            assert!((labels[i] as usize) < NUM_LABELS);
        }
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut net = Network::init(NetworkSpec::classifier(10), 4).unwrap();
        net.epochs = 3;
        net.seed = 42;
        net.hyperparameters.insert("eta".into(), "0.00003".into());
        let back = Network::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.mlp().params().iter().zip(net.mlp().params()) {
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn checkpoint_guards() {
        let net = Network::init(NetworkSpec::discriminator(), 5).unwrap();
        let good = net.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let err = Network::from_bytes(&bad_magic).unwrap_err();
        assert!(err.to_string().contains("not a checkpoint"), "{err}");

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(Network::from_bytes(&bad_version), Err(Error::VersionMismatch { found: 9, .. })));

        let short = &good[..good.len() - 16];
        let err = Network::from_bytes(short).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");

        assert!(matches!(Network::from_bytes(&good[..14]), Err(Error::Truncated(_))));
    }

    #[test]
    fn payload_short_by_four_values() {
        let net = Network::init(NetworkSpec::classifier(10), 6).unwrap();
        let bytes = net.to_bytes();
        let truncated = &bytes[..bytes.len() - 4 * 4];
        match Network::from_bytes(truncated) {
            Err(Error::PayloadLengthMismatch { expected, actual }) => {
                assert_eq!(expected - actual, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
