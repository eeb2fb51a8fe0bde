use std::collections::BTreeMap;

use super::config::ConvMode;
use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::{NdArray, Scalar};

/// Converts a separate-1D model into the fused-2D model computing the same
/// function.
///
/// The fused kernel is `K[j,0,c,tau] = sum_i Ws[j,i,c,0] * Wt[i,0,0,tau]` and
/// the fused bias is `b[j] = bs[j] + sum_{i,c} Ws[j,i,c,0] * bt[i]`. All other
/// parameters and buffers are copied unchanged. Products are accumulated in
/// f64 regardless of the element type.
pub fn fuse_1d_to_2d<T: Scalar>(model: &Model<T>) -> Result<Model<T>> {
    let cfg = model.config();
    if cfg.conv_mode != ConvMode::Separate1d {
        return Err(Error::Contract("fusion needs a separate1d model".into()));
    }
    let (k, c, m) = (cfg.n_kernels, cfg.n_channels, cfg.kernel_len);
    let get = |n: &str| model.param(n).ok_or_else(|| Error::Config(format!("missing parameter {n}")));
    let wt = get("conv_time.weight")?.data();
    let bt = get("conv_time.bias")?.data();
    let ws = get("conv_spat.weight")?.data();
    let bs = get("conv_spat.bias")?.data();

    let mut kernel = vec![0f64; k * c * m];
    let mut bias: Vec<f64> = bs.iter().map(|v| v.f64()).collect();
    for j in 0..k {
        for ch in 0..c {
            let out = &mut kernel[(j * c + ch) * m..(j * c + ch + 1) * m];
            for i in 0..k {
                let s = ws[(j * k + i) * c + ch].f64();
                bias[j] += s * bt[i].f64();
                for (o, w) in out.iter_mut().zip(&wt[i * m..(i + 1) * m]) {
                    *o += s * w.f64();
                }
            }
        }
    }

    let mut config = cfg.clone();
    config.conv_mode = ConvMode::Fused2d;
    let mut params: BTreeMap<String, NdArray<T>> = model
        .params()
        .iter()
        .filter(|(n, _)| !n.starts_with("conv_time.") && !n.starts_with("conv_spat."))
        .map(|(n, p)| (n.clone(), p.clone()))
        .collect();
    params.insert(
        "conv_st.weight".into(),
        NdArray::new(&[k, 1, c, m], kernel.into_iter().map(T::c).collect())?,
    );
    params.insert("conv_st.bias".into(), NdArray::new(&[k], bias.into_iter().map(T::c).collect())?);
    let mut fused = Model::from_parts(config, params, model.buffers().clone())?;
    fused.set_mode(model.mode());
    Ok(fused)
}
