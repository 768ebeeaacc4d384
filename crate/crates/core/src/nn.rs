//! Small layer building blocks recorded onto a [`Tape`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// `x · W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            w: store.add_glorot(format!("{name}.w"), input, output, rng)?,
            b: store.add_zeros(format!("{name}.b"), 1, output)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(x, w, b)
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).tensor.rows()
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).tensor.cols()
    }
}

/// Two affine layers with a tanh between them.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, rng)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, output, rng)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let z = self.hidden.apply(tape, x)?;
        let a = tape.tanh(z);
        self.out.apply(tape, a)
    }
}

/// One GRU direction. Gate blocks are laid out `[z | r | n]` along columns.
#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b_x: ParamId,
    pub b_h: ParamId,
    pub units: usize,
}

impl Gru {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, units: usize, rng: &mut R) -> Result<Self> {
        Ok(Gru {
            w_x: store.add_glorot(format!("{name}.w_x"), input, 3 * units, rng)?,
            w_h: store.add_glorot(format!("{name}.w_h"), units, 3 * units, rng)?,
            b_x: store.add_zeros(format!("{name}.b_x"), 1, 3 * units)?,
            b_h: store.add_zeros(format!("{name}.b_h"), 1, 3 * units)?,
            units,
        })
    }

    /// Hidden state after every step, in processing order.
    ///
    /// ```text
    /// z = σ(x W_xz + b_xz + h W_hz + b_hz)
    /// r = σ(x W_xr + b_xr + h W_hr + b_hr)
    /// n = tanh(x W_xn + b_xn + r ⊙ (h W_hn + b_hn))
    /// h' = (1 − z) ⊙ n + z ⊙ h
    /// ```
    fn run(&self, tape: &mut Tape, x: Var, reverse: bool) -> Result<Vec<Var>> {
        let k = self.units;
        let l = tape.shape(x)[0];
        let (w_x, b_x) = (tape.param(self.w_x), tape.param(self.b_x));
        let (w_h, b_h) = (tape.param(self.w_h), tape.param(self.b_h));
        let projected = tape.affine(x, w_x, b_x)?;
        let mut h = tape.constant(Tensor::zeros(1, k));
        let mut states = Vec::with_capacity(l);
        for step in 0..l {
            let t = if reverse { l - 1 - step } else { step };
            let xt = tape.slice_rows(projected, t, t + 1)?;
            let ht = tape.affine(h, w_h, b_h)?;
            let x_zr = tape.slice_cols(xt, 0, 2 * k)?;
            let h_zr = tape.slice_cols(ht, 0, 2 * k)?;
            let pre = tape.add(x_zr, h_zr)?;
            let zr = tape.sigmoid(pre);
            let z = tape.slice_cols(zr, 0, k)?;
            let r = tape.slice_cols(zr, k, 2 * k)?;
            let x_n = tape.slice_cols(xt, 2 * k, 3 * k)?;
            let h_n = tape.slice_cols(ht, 2 * k, 3 * k)?;
            let gated = tape.mul(r, h_n)?;
            let pre_n = tape.add(x_n, gated)?;
            let n = tape.tanh(pre_n);
            let diff = tape.sub(h, n)?;
            let keep = tape.mul(z, diff)?;
            h = tape.add(n, keep)?;
            states.push(h);
        }
        Ok(states)
    }
}

/// Forward and backward GRUs whose per-position states are concatenated.
#[derive(Clone, Copy, Debug)]
pub struct BiGru {
    pub forward: Gru,
    pub backward: Gru,
}

impl BiGru {
    /// `output` must be even; each direction gets half.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        if output == 0 || !output.is_multiple_of(2) {
            return Err(Error::Config(format!("bidirectional GRU width {output} must be even and positive")));
        }
        Ok(BiGru {
            forward: Gru::new(store, &format!("{name}.fwd"), input, output / 2, rng)?,
            backward: Gru::new(store, &format!("{name}.bwd"), input, output / 2, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.units
    }

    /// Encodes the rows of `x` (l × d) into l × output.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let l = tape.shape(x)[0];
        if l == 0 {
            return Err(Error::Invalid("cannot encode an empty sequence".into()));
        }
        let fwd = self.forward.run(tape, x, false)?;
        let mut bwd = self.backward.run(tape, x, true)?;
        bwd.reverse();
        let f = tape.concat_rows(&fwd)?;
        let b = tape.concat_rows(&bwd)?;
        tape.concat_cols(f, b)
    }
}
