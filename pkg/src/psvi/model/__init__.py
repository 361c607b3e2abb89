from .data import (LabeledDataset, LabelResult, label_from_nri, read_nri, smote,
                   split_train_test, stratified_folds, vif)
from .gbdt import (PUBLISHED_HYPERPARAMS, Hyperparams, Tree, TreeEnsemble, logistic_loss,
                   split_gain, train_gbdt)
from .metrics import Metrics, auc_roc, evaluate
from .search import DEFAULT_SEARCH_SPACE, SearchResult, cross_validate, random_search_cv


def predict_margin(ensemble: TreeEnsemble, x):
    return ensemble.predict_margin(x)


def predict_proba(ensemble: TreeEnsemble, x):
    return ensemble.predict_proba(x)
