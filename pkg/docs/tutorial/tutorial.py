# coding: utf-8

# # Tutorial

# In[1]:


import os
import sys
import matplotlib.pyplot as plt
import numpy as np

# Add project root dir
ROOT_DIR = os.path.abspath("../../")
sys.path.append(ROOT_DIR)

import velander
from velander import experiments, inference, mqr, opt

get_ipython().run_line_magic('matplotlib', 'inline')


# To install the dependencies for this notebook:
#
# ```bash
# conda env create -f environment.yml
# source activate velander_tutorial
# ```
#
# In this tutorial we will:
#
# * Draw a synthetic population of customers
#
# * Fit the Gumbel and Fréchet formulations by quantile regression
#   and by maximum likelihood
#
# * Test whether the peaks are heavy tailed
#
# * Store the records and fits in a sqlite database
#
# ## Synthetic customers
#
# Each synthetic customer has 50 peak slots.
# The slot loads grow linearly in energy and have a Pareto distributed
# noise term, so the peak load is Fréchet distributed in the limit.

# In[2]:


config = experiments.SynthConfig(base='pareto(3)', K=50, n=2000, seed=1)
records = experiments.synth_records(config)
config.limit_params()


# In[3]:


plt.loglog(records.energy, records.peak, '.', alpha=0.3)
plt.xlabel('energy (kW·interval)')
plt.ylabel('peak (kW)')


# ## Fitting
#
# `fit_full` fits every formulation with both methods.
# C4 has no likelihood so it is only fitted by quantile regression.

# In[4]:


fits = experiments.fit_full(
    records,
    ['C4', 'Gumbel', 'Frechet'],
    config=opt.OptimConfig(n_starts=4)
)
for fit in fits:
    print(experiments.source_label(fit), fit.gamma)


# In[5]:


energies = np.logspace(2, 6, 41)
for fit in fits[:3]:
    plt.loglog(energies, fit.quantile(0.9, energies),
               label=experiments.source_label(fit))
plt.legend()


# ## Heavy tails
#
# The likelihood ratio test compares the Gumbel and Fréchet fits.

# In[6]:


result, gumbel, frechet = inference.likelihood_ratio_test(
    records, config=opt.OptimConfig(n_starts=4))
print(result.p_value, frechet.gamma)
print(inference.fisher_std_gamma(records, frechet).std_gamma)


# ## Cross-validation

# In[7]:


report = experiments.run_cv(
    records, ['C4', 'Gumbel', 'Frechet'], k=5,
    config=opt.OptimConfig(n_starts=2))
print(report.to_table())


# ## Persistence

# In[8]:


with velander.Connection('sqlite:///tutorial.db') as conn:
    dataset = velander.DatasetHandle.create(conn, 'synthetic', 2026)
    dataset.add_records(records)
    for fit in fits:
        dataset.add_fit(fit)
    print(len(dataset), [f['formulation'] for f in dataset.fits()])
