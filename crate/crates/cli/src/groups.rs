//! Named check groups and the checks each can emit.

pub struct Group {
    pub name: &'static str,
    pub checks: &'static [&'static str],
}

pub const GROUPS: &[Group] = &[
    Group {
        name: "identities",
        checks: &[
            "bach_symmetry",
            "bach_trace",
            "christoffel_symmetry",
            "cotton_cyclic",
            "cotton_divergence_formula",
            "cotton_divergence_symmetry",
            "cotton_null_divergence",
            "cotton_skew",
            "cotton_trace",
            "cotton_weyl_divergence",
            "first_bianchi",
            "hessian_symmetry",
            "kulkarni_nomizu",
            "metric_compatibility",
            "ricci_commutation",
            "ricci_route_agreement",
            "riemann_symmetries",
            "schouten_trace",
            "schur",
            "second_bianchi",
            "third_derivative_commutation",
            "traced_commutation",
            "weyl_trace_free",
        ],
    },
    Group {
        name: "levelset",
        checks: &[
            "d2_levelset",
            "d2_rhs_nonnegative",
            "frame_orthonormality",
            "h_frame_independence",
            "h_routes",
            "level_cotton",
            "level_fiber_einstein",
            "level_grad_spread",
            "level_lambda_spread",
            "level_mean_curvature_spread",
            "level_ram",
            "level_scalar_spread",
            "level_tangential_ricci",
            "level_umbilic",
            "level_weyl",
        ],
    },
    Group {
        name: "space_form",
        checks: &["bach_zero", "cotton_zero", "einstein_constant", "scalar_curvature", "weyl_zero"],
    },
    Group {
        name: "structure",
        checks: &[
            "beta_zero_bach",
            "beta_zero_cotton",
            "beta_zero_cotton_norm",
            "beta_zero_d",
            "conformal_einstein",
            "d_contraction",
            "d_form3",
            "d_forms",
            "d_norm_bach",
            "d_norm_div_y",
            "d_skew",
            "d_trace",
            "integrability_1",
            "integrability_2",
            "sk_identity",
            "structure_residual",
            "traced_residual",
            "y_orthogonality",
            "y_ricci_soliton_form",
        ],
    },
];

pub fn group(name: &str) -> Option<&'static Group> {
    GROUPS.iter().find(|g| g.name == name)
}

pub fn is_group(name: &str) -> bool {
    group(name).is_some()
}

/// Group owning a check name.
pub fn group_of(check: &str) -> Option<&'static Group> {
    GROUPS.iter().find(|g| g.checks.contains(&check))
}

#[cfg(test)]
mod tests {
    use super::*;
    use etgeom::report::CATALOG;

    #[test]
    fn groups_partition_the_catalog() {
        for c in CATALOG {
            let owners = GROUPS.iter().filter(|g| g.checks.contains(&c.name)).count();
            assert_eq!(owners, 1, "{}", c.name);
        }
        let total: usize = GROUPS.iter().map(|g| g.checks.len()).sum();
        assert_eq!(total, CATALOG.len());
    }
}
